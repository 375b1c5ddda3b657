//! Dry run of the uniform-sensor comparison: PSNR of trained model vs FBP
//! on the 16-slice random-ellipse volume at several epoch budgets.

use std::time::Instant;

use sparseproj::fbp::{fbp_reconstruct, Filter};
use sparseproj::metrics::psnr;
use sparseproj::phantom::{make_phantom_volume, PhantomKind, PhantomSpec};
use sparseproj::pipeline::{reconstruct, train, TrainConfig};
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

    for &n in &[2usize, 4, 8, 16] {
        let angles = AngleSet::uniform(n);
        let sinos: Vec<_> = truth.iter().map(|img| radon_forward(img, &angles)).collect();

        let fbp_mean: f64 = truth
            .iter()
            .zip(&sinos)
            .map(|(t, s)| psnr(t, &fbp_reconstruct(s, Filter::HannRamp), 1.0).unwrap())
            .sum::<f64>()
            / truth.len() as f64;
        println!("n={n}: FBP mean PSNR {fbp_mean:.2} dB");

        for &epochs in &[12u32, 24, 36] {
            let config = TrainConfig { epochs: epochs as usize, ..TrainConfig::default() };
            let t0 = Instant::now();
            let outcome = train(&sinos, &config).expect("training");
            let recons = reconstruct(&sinos, &outcome.model).expect("reconstruct");
            let wall = t0.elapsed().as_secs_f64();
            let ours: f64 = truth
                .iter()
                .zip(&recons)
                .map(|(t, r)| psnr(t, r, 1.0).unwrap())
                .sum::<f64>()
                / truth.len() as f64;
            println!(
                "n={n} epochs={epochs}: ours {ours:.2} dB (fbp {fbp_mean:.2}), {wall:.0} s"
            );
        }
    }
}
