//! Prints the data and L1 terms of the objective at initialization on the
//! acceptance-scale volume, to document the sparsity-weight calibration.

use sparseproj::phantom::{make_phantom_volume, PhantomKind, PhantomSpec};
use sparseproj::pipeline::{train, TrainConfig};
use sparseproj::radon::{radon_forward, AngleSet};

fn main() {
    let spec = PhantomSpec {
        kind: PhantomKind::RandomEllipses,
        side: 64,
        n_slices: 16,
        seed: 4,
        drift: 1.0,
    };
    let truth = make_phantom_volume(&spec);
    for n in [2usize, 4] {
        let angles = AngleSet::uniform(n);
        let sinos: Vec<_> = truth.iter().map(|t| radon_forward(t, &angles)).collect();
        let config = TrainConfig { epochs: 1, alpha: 0.0, ..TrainConfig::default() };
        let outcome = train(&sinos, &config).unwrap();
        let row = &outcome.trace.rows[0];
        eprintln!(
            "n={n}: epoch-1 data {:.3e}  l1 {:.3e}  ratio band 1-10% -> alpha {:.1}..{:.1}",
            row.data_term,
            row.l1_term,
            0.01 * row.data_term / row.l1_term,
            0.10 * row.data_term / row.l1_term
        );
    }
}
