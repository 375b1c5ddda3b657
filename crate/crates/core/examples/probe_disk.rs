//! Convergence probe: small disk volume, n=2, several epoch budgets.

use std::time::Instant;

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

fn stats(label: &str, imgs: &[Image]) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut count = 0.0;
    for img in imgs {
        for v in img.as_slice() {
            lo = lo.min(*v);
            hi = hi.max(*v);
            sum += v;
            count += 1.0;
        }
    }
    println!("    {label}: min {lo:.4} max {hi:.4} mean {:.4}", sum / count);
}

fn mean_psnr(truth: &[Image], recon: &[Image]) -> f64 {
    let vals: Vec<f64> =
        truth.iter().zip(recon).map(|(t, r)| psnr(t, r, 1.0).unwrap()).collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn main() {
    let side = 32;
    let truth = disk_volume(side, 4);
    let angles = AngleSet::uniform(2);
    let sinos: Vec<_> = truth.iter().map(|t| radon_forward(t, &angles)).collect();

    let fbp: Vec<Image> =
        sinos.iter().map(|s| fbp_reconstruct(s, Filter::HannRamp)).collect();
    println!("fbp mean psnr: {:.3} dB", mean_psnr(&truth, &fbp));
    stats("truth", &truth);
    stats("fbp", &fbp);

    for epochs in [60usize, 200, 600] {
        let config = TrainConfig { epochs, batch_size: 4, log_every: 0, ..TrainConfig::default() };
        let t0 = Instant::now();
        let outcome = train(&sinos, &config).unwrap();
        let recon = reconstruct(&sinos, &outcome.model).unwrap();
        let rows = &outcome.trace.rows;
        println!(
            "epochs {:>3}: ours {:.3} dB  data {:.3e} -> {:.3e}  ({:.0} s)",
            epochs,
            mean_psnr(&truth, &recon),
            rows[0].data_term,
            rows[rows.len() - 1].data_term,
            t0.elapsed().as_secs_f64()
        );
        stats("ours", &recon);
    }
}
