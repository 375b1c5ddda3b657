//! The reconstruction network and the differentiable projector it trains
//! against.
//!
//! The generator is a 17-layer convolutional stack that maps the per-angle
//! backprojection stack of a slice to a reconstruction: layer 1 takes the
//! `n` angle channels to 64, layers 2–16 are 64→64 with batch
//! normalization, layer 17 is a linear 64→1 readout. ReLU follows every
//! layer except the last, and the output is masked to the inscribed circle
//! so the generator can only place mass where the projector can see it.
//!
//! The projector re-applies the forward projection to the reconstruction
//! and then a per-angle affine response `w[i] * p + b[i]` — the learnable
//! stand-in for sensor gain/offset non-uniformity. Both halves run on the
//! autodiff tape, so one backward pass reaches every parameter.

use std::path::Path;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{BnState, Mode, ParamId, ParamStore, Tape, TensorId};
use crate::image::circle_mask;
use crate::io::FileError;
use crate::radon::ProjectionGeometry;

/// Channel width of the hidden layers.
pub const GENERATOR_CHANNELS: usize = 64;
/// Total convolution layers in the generator.
pub const GENERATOR_LAYERS: usize = 17;

/// One convolution layer's parameters plus its optional normalization:
/// `(gamma, beta, index into bn_states)`.
#[derive(Debug, Clone)]
struct ConvLayer {
    weight: ParamId,
    bias: ParamId,
    norm: Option<(ParamId, ParamId, usize)>,
    relu: bool,
}

/// Parameter handles and running statistics for the generator network.
#[derive(Debug, Clone)]
pub struct GeneratorParams {
    n_angles: usize,
    layers: Vec<ConvLayer>,
    bn_states: Vec<BnState>,
}

impl GeneratorParams {
    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn bn_states(&self) -> &[BnState] {
        &self.bn_states
    }
}

/// Per-angle affine sensor response. With `trainable = false` the values
/// stay pinned at the identity (`w = 1`, `b = 0`).
#[derive(Debug, Clone)]
pub struct SensorCalibration {
    pub w: ParamId,
    pub b: ParamId,
    pub trainable: bool,
}

/// A complete trainable model: the parameter store that owns all values,
/// the generator topology, and the sensor calibration.
#[derive(Debug, Clone)]
pub struct Model {
    pub store: ParamStore,
    pub generator: GeneratorParams,
    pub calibration: SensorCalibration,
}

/// Builds a freshly initialized model for `n` projection angles.
///
/// Convolution weights draw from the He normal distribution
/// (`std = sqrt(2 / fan_in)`, `fan_in = 9 * c_in`) so activations keep
/// their scale through the ReLU stack; biases start at zero, batchnorm at
/// the identity (`gamma = 1`, `beta = 0`), and the sensor calibration at
/// the identity response (`w = 1`, `b = 0`) whether or not it will train.
pub fn init_params(n: usize, seed: u64, calibration_trainable: bool) -> Model {
    assert!(n >= 1, "need at least one angle channel");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let mut layers = Vec::with_capacity(GENERATOR_LAYERS);
    let mut bn_states = Vec::new();

    let mut he_conv = |store: &mut ParamStore, name: String, cout: usize, cin: usize| {
        let std = (2.0 / (9 * cin) as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("valid normal");
        let weight: Vec<f64> = (0..cout * cin * 9).map(|_| dist.sample(&mut rng)).collect();
        let w = store.add(format!("{name}.weight"), vec![cout, cin, 3, 3], weight, true);
        let b = store.add(format!("{name}.bias"), vec![cout], vec![0.0; cout], true);
        (w, b)
    };

    for layer in 1..=GENERATOR_LAYERS {
        let cin = if layer == 1 { n } else { GENERATOR_CHANNELS };
        let cout = if layer == GENERATOR_LAYERS { 1 } else { GENERATOR_CHANNELS };
        let (weight, bias) = he_conv(&mut store, format!("conv{layer}"), cout, cin);
        let norm = if layer > 1 && layer < GENERATOR_LAYERS {
            let gamma = store.add(format!("bn{layer}.gamma"), vec![cout], vec![1.0; cout], true);
            let beta = store.add(format!("bn{layer}.beta"), vec![cout], vec![0.0; cout], true);
            bn_states.push(BnState::new(cout));
            Some((gamma, beta, bn_states.len() - 1))
        } else {
            None
        };
        layers.push(ConvLayer { weight, bias, norm, relu: layer < GENERATOR_LAYERS });
    }

    let w = store.add("calib.w", vec![n], vec![1.0; n], calibration_trainable);
    let b = store.add("calib.b", vec![n], vec![0.0; n], calibration_trainable);

    Model {
        store,
        generator: GeneratorParams { n_angles: n, layers, bn_states },
        calibration: SensorCalibration { w, b, trainable: calibration_trainable },
    }
}

/// Runs the generator on a `[batch, n, N, N]` backprojection stack and
/// returns the masked `[batch, 1, N, N]` reconstruction tensor.
///
/// Train mode normalizes with batch statistics and updates the running
/// stats in `generator`; eval mode uses the stored running stats.
pub fn generator_forward(
    tape: &mut Tape,
    stack: TensorId,
    store: &ParamStore,
    generator: &mut GeneratorParams,
    mode: Mode,
) -> TensorId {
    let shape = tape.shape(stack).to_vec();
    assert_eq!(shape.len(), 4, "stack must be [batch, angles, N, N]");
    assert_eq!(
        shape[1],
        generator.n_angles,
        "stack has {} angle channels but the generator expects {}",
        shape[1],
        generator.n_angles
    );
    let (batch, side) = (shape[0], shape[2]);
    assert_eq!(shape[3], side, "stack planes must be square");

    let mut x = stack;
    for layer in &generator.layers {
        let w = tape.param(store, layer.weight);
        let b = tape.param(store, layer.bias);
        x = tape.conv2d(x, w, b);
        if let Some((gamma_id, beta_id, bn)) = layer.norm {
            let gamma = tape.param(store, gamma_id);
            let beta = tape.param(store, beta_id);
            x = tape.batchnorm2d(x, gamma, beta, &mut generator.bn_states[bn], mode);
        }
        if layer.relu {
            x = tape.relu(x);
        }
    }

    let mask = circle_mask(side);
    let tiled: Vec<f64> = std::iter::repeat_with(|| mask.iter().copied())
        .take(batch)
        .flatten()
        .collect();
    let mask_t = tape.constant(tiled, vec![batch, 1, side, side]);
    tape.mul(x, mask_t)
}

/// Projects a `[batch, 1, N, N]` reconstruction through the shared forward
/// geometry and applies the per-angle sensor response, producing a
/// `[batch, n, N]` sinogram tensor. With identity calibration this equals
/// the plain forward projection bit for bit.
pub fn projector_forward(
    tape: &mut Tape,
    recon: TensorId,
    store: &ParamStore,
    geometry: &Rc<ProjectionGeometry>,
    calib: &SensorCalibration,
) -> TensorId {
    let p = tape.radon_project(recon, geometry);
    let w = tape.param(store, calib.w);
    let b = tape.param(store, calib.b);
    tape.affine_per_angle(p, w, b)
}

/// Checkpoint layout: an 8-byte magic, four little-endian u32 fields
/// (angle count, training side, layer count, flags bit 0 = calibration
/// trainable), every parameter in declaration order, then each batchnorm
/// state as (initialized flag, running means, running variances) — all
/// values little-endian f64.
const CHECKPOINT_MAGIC: &[u8; 8] = b"SPRJ1\0\0\0";

/// Serializes a model plus the resolution it was trained at.
pub fn save_checkpoint(path: &Path, model: &Model, side: usize) -> Result<(), FileError> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    let flags: u32 = model.calibration.trainable as u32;
    for v in [
        model.generator.n_angles as u32,
        side as u32,
        GENERATOR_LAYERS as u32,
        flags,
    ] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for (_, p) in model.store.iter() {
        for v in &p.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    for state in &model.generator.bn_states {
        bytes.extend_from_slice(&(state.initialized as u8 as f64).to_le_bytes());
        for v in state.running_mean.iter().chain(state.running_var.iter()) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Restores a model and its training resolution from [`save_checkpoint`]
/// output.
pub fn load_checkpoint(path: &Path) -> Result<(Model, usize), FileError> {
    let fmt = |offset: usize, detail: String| FileError::Format { offset, detail };
    let bytes = std::fs::read(path)?;
    if bytes.len() < 24 {
        return Err(fmt(bytes.len(), "file shorter than the 24-byte header".into()));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(fmt(0, "expected checkpoint magic \"SPRJ1\"".into()));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
    let n = field(0) as usize;
    let side = field(1) as usize;
    let layers = field(2) as usize;
    let flags = field(3);
    if n == 0 || layers != GENERATOR_LAYERS {
        return Err(fmt(8, format!("unsupported model shape: {n} angles, {layers} layers")));
    }

    let mut model = init_params(n, 0, flags & 1 != 0);
    let param_reals: usize = model.store.numel();
    let bn_reals: usize =
        model.generator.bn_states.iter().map(|s| 1 + 2 * s.channels()).sum();
    let expected = 24 + (param_reals + bn_reals) * 8;
    if bytes.len() != expected {
        return Err(fmt(
            bytes.len().min(expected),
            format!("checkpoint needs {expected} bytes, file has {}", bytes.len()),
        ));
    }

    let mut reals = bytes[24..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for (_, p) in model.store.iter_mut() {
        for v in &mut p.values {
            *v = reals.next().unwrap();
        }
    }
    for state in &mut model.generator.bn_states {
        state.initialized = reals.next().unwrap() != 0.0;
        for v in state.running_mean.iter_mut() {
            *v = reals.next().unwrap();
        }
        for v in state.running_var.iter_mut() {
            *v = reals.next().unwrap();
        }
    }
    Ok((model, side))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{in_circle, Image};
    use crate::oracle;
    use crate::radon::{radon_forward_with, AngleSet};
    use rand::Rng;

    fn random_stack(rng: &mut ChaCha8Rng, batch: usize, n: usize, side: usize) -> Vec<f64> {
        (0..batch * n * side * side).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn same_seed_gives_bit_identical_parameters() {
        let a = init_params(4, 9, true);
        let b = init_params(4, 9, true);
        assert_eq!(a.store.numel(), b.store.numel());
        for ((_, pa), (_, pb)) in a.store.iter().zip(b.store.iter()) {
            assert_eq!(pa.name, pb.name);
            for (x, y) in pa.values.iter().zip(&pb.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        let c = init_params(4, 10, true);
        let wa = &a.store.get(a.generator.layers[0].weight).values;
        let wc = &c.store.get(c.generator.layers[0].weight).values;
        assert_ne!(wa, wc);
    }

    #[test]
    fn calibration_starts_at_identity() {
        for trainable in [false, true] {
            let m = init_params(6, 1, trainable);
            assert!(m.store.get(m.calibration.w).values.iter().all(|&v| v == 1.0));
            assert!(m.store.get(m.calibration.b).values.iter().all(|&v| v == 0.0));
            assert_eq!(m.store.get(m.calibration.w).trainable, trainable);
        }
    }

    #[test]
    fn first_layer_kernels_match_he_scale() {
        // With 18 input channels the first layer holds 64*18*9 = 10368
        // samples, enough for a tight sample-std check.
        let n = 18;
        let m = init_params(n, 3, false);
        let w = &m.store.get(m.generator.layers[0].weight).values;
        assert!(w.len() >= 10_000);
        let mean: f64 = w.iter().sum::<f64>() / w.len() as f64;
        let std =
            (w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w.len() as f64).sqrt();
        let expect = (2.0 / (9 * n) as f64).sqrt();
        assert!((std - expect).abs() < 0.2 * expect, "std {std} vs {expect}");
    }

    #[test]
    fn zero_stack_maps_to_zero_output() {
        let mut m = init_params(3, 5, false);
        let side = 16;
        let mut tape = Tape::new();
        let stack = tape.constant(vec![0.0; 2 * 3 * side * side], vec![2, 3, side, side]);
        let out = generator_forward(&mut tape, stack, &m.store, &mut m.generator, Mode::Train);
        assert_eq!(tape.shape(out), &[2, 1, side, side]);
        assert!(tape.values(out).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_shape_follows_input_resolution() {
        for side in [32, 64] {
            let mut m = init_params(2, 0, false);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut tape = Tape::new();
            let stack =
                tape.constant(random_stack(&mut rng, 1, 2, side), vec![1, 2, side, side]);
            let out =
                generator_forward(&mut tape, stack, &m.store, &mut m.generator, Mode::Train);
            assert_eq!(tape.shape(out), &[1, 1, side, side]);
        }
    }

    #[test]
    fn generator_output_is_masked_to_the_circle() {
        let mut m = init_params(2, 7, false);
        let side = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut tape = Tape::new();
        let stack = tape.constant(random_stack(&mut rng, 1, 2, side), vec![1, 2, side, side]);
        let out = generator_forward(&mut tape, stack, &m.store, &mut m.generator, Mode::Train);
        let v = tape.values(out);
        let mut saw_nonzero = false;
        for r in 0..side {
            for c in 0..side {
                if in_circle(side, r, c) {
                    saw_nonzero |= v[r * side + c] != 0.0;
                } else {
                    assert_eq!(v[r * side + c], 0.0);
                }
            }
        }
        assert!(saw_nonzero, "random input should produce some signal");
    }

    #[test]
    #[should_panic(expected = "angle channels")]
    fn mismatched_channel_count_is_rejected() {
        let mut m = init_params(4, 0, false);
        let mut tape = Tape::new();
        let stack = tape.constant(vec![0.0; 3 * 8 * 8], vec![1, 3, 8, 8]);
        generator_forward(&mut tape, stack, &m.store, &mut m.generator, Mode::Train);
    }

    #[test]
    fn generator_gradient_matches_finite_differences() {
        // Full 17-layer stack at N=8, n=2; compare the backward gradient of
        // sum(output) against central differences for a few first-layer
        // kernel entries.
        let side = 8;
        let n = 2;
        let base = init_params(n, 11, false);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let stack_vals = random_stack(&mut rng, 1, n, side);

        let run = |model: &Model| -> (f64, Vec<f64>) {
            // Clone so batchnorm running-stat updates never leak between
            // evaluations of the objective.
            let mut m = model.clone();
            let mut tape = Tape::new();
            let stack = tape.constant(stack_vals.clone(), vec![1, n, side, side]);
            let out = generator_forward(&mut tape, stack, &m.store, &mut m.generator, Mode::Train);
            let loss = tape.sum(out);
            let value = tape.scalar(loss);
            tape.backward(loss, &mut m.store);
            let grad = m.store.get(m.generator.layers[0].weight).grad.clone().unwrap();
            (value, grad)
        };
        let (_, grad) = run(&base);

        let wid = base.generator.layers[0].weight;
        for &k in &[0usize, 7, 11, 17] {
            let mut f = |theta: &[f64]| {
                let mut m = base.clone();
                m.store.get_mut(wid).values[k] = theta[0];
                run(&m).0
            };
            let x0 = [base.store.get(wid).values[k]];
            let fd = oracle::finite_diff_grad(&mut f, &x0, 1e-6)[0];
            let rel = (grad[k] - fd).abs() / fd.abs().max(1e-9);
            assert!(rel <= 1e-3, "entry {k}: backward {} vs fd {fd} (rel {rel})", grad[k]);
        }
    }

    #[test]
    fn identity_calibration_reproduces_the_plain_projection() {
        let side = 16;
        let n = 4;
        let m = init_params(n, 0, false);
        let geometry = Rc::new(ProjectionGeometry::new(side, AngleSet::uniform(n)));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pixels: Vec<f64> = (0..side * side).map(|_| rng.gen_range(0.0..1.0)).collect();
        let img = Image::from_pixels(side, pixels.clone());

        let mut tape = Tape::new();
        let recon = tape.constant(pixels, vec![1, 1, side, side]);
        let sino_t = projector_forward(&mut tape, recon, &m.store, &geometry, &m.calibration);
        let direct = radon_forward_with(&geometry, &img);
        assert_eq!(tape.values(sino_t), direct.data());
    }

    #[test]
    fn affine_response_on_zero_image_is_the_offset() {
        let side = 8;
        let n = 3;
        let mut m = init_params(n, 0, true);
        m.store.get_mut(m.calibration.w).values.fill(2.0);
        m.store.get_mut(m.calibration.b).values.fill(5.0);
        let geometry = Rc::new(ProjectionGeometry::new(side, AngleSet::uniform(n)));
        let mut tape = Tape::new();
        let recon = tape.constant(vec![0.0; side * side], vec![1, 1, side, side]);
        let out = projector_forward(&mut tape, recon, &m.store, &geometry, &m.calibration);
        assert!(tape.values(out).iter().all(|&v| v == 5.0));
    }

    #[test]
    fn projector_pixel_gradient_matches_finite_differences() {
        let side = 16;
        let n = 4;
        let m = init_params(n, 0, true);
        let geometry = Rc::new(ProjectionGeometry::new(side, AngleSet::uniform(n)));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let base: Vec<f64> = (0..side * side).map(|_| rng.gen_range(0.0..1.0)).collect();

        let eval = |pixels: Vec<f64>| -> f64 {
            let mut store = m.store.clone();
            let mut tape = Tape::new();
            let recon = tape.constant(pixels, vec![1, 1, side, side]);
            let out = projector_forward(&mut tape, recon, &m.store, &geometry, &m.calibration);
            let loss = tape.sum(out);
            let v = tape.scalar(loss);
            tape.backward(loss, &mut store);
            v
        };

        // Backward gradient for the probed pixels.
        let mut store = m.store.clone();
        let mut tape = Tape::new();
        let recon = tape.constant(base.clone(), vec![1, 1, side, side]);
        let out = projector_forward(&mut tape, recon, &m.store, &geometry, &m.calibration);
        let loss = tape.sum(out);
        tape.backward(loss, &mut store);
        let grad = tape.grad(recon).expect("input gradient").to_vec();

        for &k in &[0usize, 37, 120, 200] {
            let mut f = |theta: &[f64]| {
                let mut p = base.clone();
                p[k] = theta[0];
                eval(p)
            };
            let fd = oracle::finite_diff_grad(&mut f, &[base[k]], 1e-5)[0];
            let rel = (grad[k] - fd).abs() / fd.abs().max(1e-9);
            assert!(rel <= 1e-6, "pixel {k}: backward {} vs fd {fd} (rel {rel})", grad[k]);
        }
    }

    #[test]
    fn one_backward_pass_reaches_every_parameter() {
        let side = 12;
        let n = 3;
        let mut m = init_params(n, 13, true);
        let geometry = Rc::new(ProjectionGeometry::new(side, AngleSet::uniform(n)));
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut tape = Tape::new();
        let stack = tape.constant(random_stack(&mut rng, 2, n, side), vec![2, n, side, side]);
        let recon = generator_forward(&mut tape, stack, &m.store, &mut m.generator, Mode::Train);
        let sino = projector_forward(&mut tape, recon, &m.store, &geometry, &m.calibration);
        let target: Vec<f64> = (0..2 * n * side).map(|_| rng.gen_range(0.0..1.0)).collect();
        let target_t = tape.constant(target, vec![2, n, side]);
        let loss = tape.mse_vs(sino, target_t);
        tape.backward(loss, &mut m.store);

        for (_, p) in m.store.iter() {
            let grad = p.grad.as_ref().unwrap_or_else(|| panic!("no grad on {}", p.name));
            assert!(
                grad.iter().any(|&g| g != 0.0),
                "parameter {} received an all-zero gradient",
                p.name
            );
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let side = 12;
        let n = 2;
        let mut m = init_params(n, 21, true);

        // Push the model away from initialization so the round trip is
        // meaningful: one training-mode forward seeds BN running stats.
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut tape = Tape::new();
        let stack = tape.constant(random_stack(&mut rng, 1, n, side), vec![1, n, side, side]);
        generator_forward(&mut tape, stack, &m.store, &mut m.generator, Mode::Train);
        m.store.get_mut(m.calibration.w).values[1] = 1.75;

        save_checkpoint(&path, &m, side).unwrap();
        let (back, loaded_side) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded_side, side);
        assert_eq!(back.calibration.trainable, true);
        for ((_, pa), (_, pb)) in m.store.iter().zip(back.store.iter()) {
            assert_eq!(pa.name, pb.name);
            for (x, y) in pa.values.iter().zip(&pb.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        for (sa, sb) in m.generator.bn_states.iter().zip(back.generator.bn_states()) {
            assert_eq!(sa.initialized, sb.initialized);
            assert_eq!(sa.running_mean, sb.running_mean);
            assert_eq!(sa.running_var, sb.running_var);
        }

        // The restored model runs eval-mode inference identically.
        let mut ta = Tape::new();
        let mut tb = Tape::new();
        let vals = random_stack(&mut rng, 1, n, side);
        let sa = ta.constant(vals.clone(), vec![1, n, side, side]);
        let sb = tb.constant(vals, vec![1, n, side, side]);
        let mut ma = m.clone();
        let mut mb = back.clone();
        let oa = generator_forward(&mut ta, sa, &ma.store, &mut ma.generator, Mode::Eval);
        let ob = generator_forward(&mut tb, sb, &mb.store, &mut mb.generator, Mode::Eval);
        assert_eq!(ta.values(oa), tb.values(ob));
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let m = init_params(2, 0, false);
        save_checkpoint(&path, &m, 8).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(FileError::Format { .. })));

        let mut wrong = bytes.clone();
        wrong[..8].copy_from_slice(b"BADMAGIC");
        std::fs::write(&path, wrong).unwrap();
        match load_checkpoint(&path) {
            Err(FileError::Format { offset: 0, .. }) => {}
            other => panic!("expected magic failure, got {other:?}"),
        }
    }
}
