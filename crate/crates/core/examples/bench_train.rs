//! Times one training epoch at the evaluation sizes to calibrate epoch
//! budgets. Temporary tool, not part of the library surface.

use std::time::Instant;

use sparseproj::phantom::{make_phantom_volume, PhantomKind, PhantomSpec};
use sparseproj::pipeline::{train, TrainConfig};
use sparseproj::radon::radon_forward;
use sparseproj::AngleSet;

fn main() {
    let side = 64;
    let slices = 16;
    let vol = make_phantom_volume(&PhantomSpec {
        kind: PhantomKind::RandomEllipses,
        side,
        n_slices: slices,
        seed: 1,
        drift: 0.5,
    });
    for n in [2usize, 4, 16] {
        let angles = AngleSet::uniform(n);
        let sinos: Vec<_> = vol.iter().map(|img| radon_forward(img, &angles)).collect();
        let config = TrainConfig { epochs: 3, ..TrainConfig::default() };
        let start = Instant::now();
        let out = train(&sinos, &config).unwrap();
        let total = start.elapsed().as_secs_f64();
        let per_epoch: f64 =
            out.trace.rows.iter().map(|r| r.wall_ms).sum::<f64>() / out.trace.rows.len() as f64;
        println!(
            "n={n:>2}: {:.2} s total (3 epochs + setup), {:.0} ms/epoch",
            total, per_epoch
        );
    }
}
