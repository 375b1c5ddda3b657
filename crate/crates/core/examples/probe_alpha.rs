//! Sweep the L1 weight on the small disk case: does a stronger sparsity
//! prior pick a better null-space solution at very sparse angles?

use sparseproj::fbp::{fbp_reconstruct, Filter};
use sparseproj::image::{in_circle, Image};
use sparseproj::metrics::psnr;
use sparseproj::pipeline::{reconstruct, train, TrainConfig};
use sparseproj::radon::{radon_forward, AngleSet};

fn disk_volume(side: usize, slices: usize) -> Vec<Image> {
    let c = (side as f64 - 1.0) / 2.0;
    (0..slices)
        .map(|s| {
            let radius = side as f64 * (0.18 + 0.05 * s as f64);
            let mut img = Image::zeros(side);
            for r in 0..side {
                for col in 0..side {
                    let d2 = (r as f64 - c).powi(2) + (col as f64 - c).powi(2);
                    if d2 <= radius * radius && in_circle(side, r, col) {
                        img.set(r, col, 0.8);
                    }
                }
            }
            img
        })
        .collect()
}

fn mean_psnr(truth: &[Image], recon: &[Image]) -> f64 {
    let vals: Vec<f64> =
        truth.iter().zip(recon).map(|(t, r)| psnr(t, r, 1.0).unwrap()).collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn range(imgs: &[Image]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for img in imgs {
        for v in img.as_slice() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    (lo, hi)
}

fn main() {
    let side = 32;
    let truth = disk_volume(side, 4);
    for n in [2usize, 4] {
        let angles = AngleSet::uniform(n);
        let sinos: Vec<_> = truth.iter().map(|t| radon_forward(t, &angles)).collect();
        let fbp: Vec<Image> =
            sinos.iter().map(|s| fbp_reconstruct(s, Filter::HannRamp)).collect();
        println!("n={n}: fbp {:.3} dB", mean_psnr(&truth, &fbp));
        for alpha in [1e-3, 1e-2, 1e-1, 1.0, 10.0] {
            let config = TrainConfig {
                alpha,
                epochs: 150,
                batch_size: 4,
                ..TrainConfig::default()
            };
            let outcome = train(&sinos, &config).unwrap();
            let recons = reconstruct(&sinos, &outcome.model).unwrap();
            let last = outcome.trace.rows.last().unwrap();
            let (lo, hi) = range(&recons);
            println!(
                "  alpha {alpha:>6}: ours {:.3} dB  data {:.2e}  range [{lo:.2}, {hi:.2}]",
                mean_psnr(&truth, &recons),
                last.data_term,
            );
        }
    }
}
