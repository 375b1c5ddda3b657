//! Hyperparameter probe at acceptance scale: random-ellipse volume,
//! N=64, 16 slices, n in {2,4}, alpha sweep with mid-training snapshots.

use std::rc::Rc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sparseproj::autodiff::{Adam, Mode, Tape};
use sparseproj::fbp::{fbp_reconstruct, Filter};
use sparseproj::image::Image;
use sparseproj::metrics::psnr;
use sparseproj::model::{generator_forward, init_params, projector_forward};
use sparseproj::phantom::{make_phantom_volume, PhantomKind, PhantomSpec};
use sparseproj::pipeline::{objective, reconstruct};
use sparseproj::radon::{
    radon_forward, single_view_backprojections_with, AngleSet, ProjectionGeometry, Sinogram,
};

fn mean_psnr(truth: &[Image], recon: &[Image]) -> f64 {
    let vals: Vec<f64> =
        truth.iter().zip(recon).map(|(t, r)| psnr(t, r, 1.0).unwrap()).collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn main() {
    let spec = PhantomSpec {
        kind: PhantomKind::RandomEllipses,
        side: 64,
        n_slices: 16,
        seed: 4,
        drift: 1.0,
    };
    let truth = make_phantom_volume(&spec);
    let batch_size = 8usize;
    let lr = 1e-3;
    let epochs = 30usize;

    for n in [2usize, 4] {
        let angles = AngleSet::uniform(n);
        let sinos: Vec<Sinogram> =
            truth.iter().map(|t| radon_forward(t, &angles)).collect();
        let fbp: Vec<Image> =
            sinos.iter().map(|s| fbp_reconstruct(s, Filter::HannRamp)).collect();
        eprintln!("n={n}: fbp {:.3} dB", mean_psnr(&truth, &fbp));

        for alpha in [4.0f64, 10.0, 30.0] {
            let side = 64usize;
            let plane = side * side;
            let geometry = Rc::new(ProjectionGeometry::new(side, angles.clone()));
            let mut model = init_params(n, 0, false);
            let mut opt = Adam::new(&model.store, lr);
            let stacks: Vec<Vec<f64>> =
                sinos.iter().map(|s| single_view_backprojections_with(&geometry, s)).collect();
            let mut order: Vec<usize> = (0..sinos.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(0x9E37_79B9_7F4A_7C15);
            let t0 = Instant::now();
            for epoch in 0..epochs {
                order.shuffle(&mut rng);
                let mut last_data = 0.0;
                for batch in order.chunks(batch_size) {
                    let b = batch.len();
                    let mut stack_vals = Vec::with_capacity(b * n * plane);
                    let mut target_vals = Vec::with_capacity(b * n * side);
                    for &s in batch {
                        stack_vals.extend_from_slice(&stacks[s]);
                        target_vals.extend_from_slice(sinos[s].data());
                    }
                    let mut tape = Tape::new();
                    let stack = tape.constant(stack_vals, vec![b, n, side, side]);
                    let target = tape.constant(target_vals, vec![b, n, side]);
                    let recon = generator_forward(
                        &mut tape,
                        stack,
                        &model.store,
                        &mut model.generator,
                        Mode::Train,
                    );
                    let predicted = projector_forward(
                        &mut tape,
                        recon,
                        &model.store,
                        &geometry,
                        &model.calibration,
                    );
                    let terms = objective(&mut tape, target, predicted, recon, alpha);
                    last_data = tape.scalar(terms.data_term);
                    tape.backward(terms.total, &mut model.store);
                    opt.step(&mut model.store).unwrap();
                    model.store.zero_grad();
                }
                if (epoch + 1) % 10 == 0 {
                    let recons = reconstruct(&sinos, &model).unwrap();
                    eprintln!(
                        "  alpha {alpha:>4}: epoch {:>2}  ours {:.3} dB  data {last_data:.3e}  ({:.0} s)",
                        epoch + 1,
                        mean_psnr(&truth, &recons),
                        t0.elapsed().as_secs_f64()
                    );
                }
            }
        }
    }
}
