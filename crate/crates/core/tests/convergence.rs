//! Long-horizon training behavior on the smallest interesting problem: one
//! disk slice, four views. The objective directly minimizes measurement
//! consistency, so the data term collapsing by orders of magnitude — and
//! the reconstruction reprojecting onto the measurements — is the oracle
//! for the whole train loop, not just for any single op.

use sparseproj::image::{in_circle, Image};
use sparseproj::pipeline::{reconstruct, train, TrainConfig};
use sparseproj::radon::{radon_forward, AngleSet};

fn disk(side: usize) -> Image {
    let c = (side as f64 - 1.0) / 2.0;
    let r = side as f64 * 0.35;
    let mut img = Image::zeros(side);
    for row in 0..side {
        for col in 0..side {
            let d = ((row as f64 - c).powi(2) + (col as f64 - c).powi(2)).sqrt();
            if d <= r && in_circle(side, row, col) {
                img.set(row, col, 0.8);
            }
        }
    }
    img
}

#[test]
fn single_slice_run_collapses_the_data_term_and_reprojects() {
    let side = 64;
    let truth = disk(side);
    let angles = AngleSet::uniform(4);
    let sino = radon_forward(&truth, &angles);

    let config = TrainConfig { epochs: 500, ..TrainConfig::default() };
    let outcome = train(std::slice::from_ref(&sino), &config).expect("training stays finite");

    let rows = &outcome.trace.rows;
    assert_eq!(rows.len(), config.epochs, "one trace row per epoch");
    let first = rows[0].data_term;
    let last = rows.last().unwrap().data_term;
    assert!(
        last <= 0.01 * first,
        "data term must fall below 1% of its epoch-1 value: epoch 1 {first:.3e}, final {last:.3e}"
    );

    // The converged reconstruction, pushed back through the projection,
    // lands on the measurements bin by bin.
    let recon = &reconstruct(std::slice::from_ref(&sino), &outcome.model).unwrap()[0];
    let reproj = radon_forward(recon, &angles);
    let n_el = sino.data().len() as f64;
    let rmse = (sino
        .data()
        .iter()
        .zip(reproj.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n_el)
        .sqrt();
    let peak = sino.data().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    assert!(
        rmse <= 0.05 * peak,
        "reprojection RMSE {rmse:.3} exceeds 5% of the sinogram peak {peak:.3}"
    );
}
