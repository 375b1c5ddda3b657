//! Batch normalization kernels over `[batch, channels, h, w]` buffers.
//!
//! Statistics are per channel across batch and spatial dimensions, using the
//! biased variance (divide by the element count). Running statistics follow
//! `running = momentum * running + (1 - momentum) * batch`, except the very
//! first training call, which seeds them with the batch statistics directly
//! so early evaluation is not polluted by the arbitrary init values.

use super::conv::{dot, vsum};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-layer running statistics, updated during training and consumed in
/// eval mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BnState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// False until the first training-mode forward seeds the running stats.
    pub initialized: bool,
}

impl BnState {
    pub fn new(channels: usize) -> Self {
        BnState {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            initialized: false,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

/// Per-channel mean and biased variance over batch and spatial dims.
pub fn batch_stats(
    x: &[f64],
    batch: usize,
    channels: usize,
    plane: usize,
) -> (Vec<f64>, Vec<f64>) {
    let count = (batch * plane) as f64;
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    for c in 0..channels {
        let mut sum = 0.0;
        for b in 0..batch {
            sum += vsum(&x[(b * channels + c) * plane..][..plane]);
        }
        mean[c] = sum / count;
    }
    for c in 0..channels {
        let m = mean[c];
        let mut sq = 0.0;
        for b in 0..batch {
            let xc = &x[(b * channels + c) * plane..][..plane];
            // E[x^2] accumulation would lose precision for large means;
            // accumulate centered squares instead.
            let mut acc = [0.0f64; 8];
            let mut chunks = xc.chunks_exact(8);
            for ca in &mut chunks {
                for lane in 0..8 {
                    let d = ca[lane] - m;
                    acc[lane] += d * d;
                }
            }
            sq += acc.iter().sum::<f64>();
            for v in chunks.remainder() {
                let d = v - m;
                sq += d * d;
            }
        }
        var[c] = sq / count;
    }
    (mean, var)
}

/// Normalizes `x` into `out` with the given per-channel statistics and
/// affine parameters: `out = gamma * (x - mean) / sqrt(var + eps) + beta`.
pub fn normalize_forward(
    x: &[f64],
    batch: usize,
    channels: usize,
    plane: usize,
    mean: &[f64],
    var: &[f64],
    gamma: &[f64],
    beta: &[f64],
    out: &mut [f64],
) {
    for c in 0..channels {
        let inv_std = 1.0 / (var[c] + BN_EPS).sqrt();
        let scale = gamma[c] * inv_std;
        let shift = beta[c] - mean[c] * scale;
        for b in 0..batch {
            let src = &x[(b * channels + c) * plane..][..plane];
            let dst = &mut out[(b * channels + c) * plane..][..plane];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = scale * s + shift;
            }
        }
    }
}

/// Folds fresh batch statistics into the running estimates.
pub fn update_running(state: &mut BnState, mean: &[f64], var: &[f64]) {
    if !state.initialized {
        state.running_mean.copy_from_slice(mean);
        state.running_var.copy_from_slice(var);
        state.initialized = true;
        return;
    }
    for c in 0..state.running_mean.len() {
        state.running_mean[c] = BN_MOMENTUM * state.running_mean[c] + (1.0 - BN_MOMENTUM) * mean[c];
        state.running_var[c] = BN_MOMENTUM * state.running_var[c] + (1.0 - BN_MOMENTUM) * var[c];
    }
}

/// Training-mode backward. Gradients flow through the batch statistics:
/// with `xhat = (x - mean) / sqrt(var + eps)` and per-channel means taken
/// over batch and spatial dims,
///
/// ```text
/// dx = gamma / sqrt(var + eps) * (dy - mean(dy) - xhat * mean(dy * xhat))
/// dgamma = sum(dy * xhat)        dbeta = sum(dy)
/// ```
#[allow(clippy::too_many_arguments)]
pub fn backward_train(
    x: &[f64],
    grad_out: &[f64],
    batch: usize,
    channels: usize,
    plane: usize,
    mean: &[f64],
    var: &[f64],
    gamma: &[f64],
    grad_x: &mut [f64],
    grad_gamma: &mut [f64],
    grad_beta: &mut [f64],
) {
    let count = (batch * plane) as f64;
    for c in 0..channels {
        let m = mean[c];
        let inv_std = 1.0 / (var[c] + BN_EPS).sqrt();

        // First pass: sum(dy) and sum(dy * xhat) for this channel.
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for b in 0..batch {
            let off = (b * channels + c) * plane;
            let xc = &x[off..off + plane];
            let gc = &grad_out[off..off + plane];
            sum_dy += vsum(gc);
            // sum(dy * xhat) = inv_std * (sum(dy * x) - mean * sum(dy))
            sum_dy_xhat += dot(gc, xc);
        }
        sum_dy_xhat = inv_std * (sum_dy_xhat - m * sum_dy);

        grad_gamma[c] += sum_dy_xhat;
        grad_beta[c] += sum_dy;

        let mean_dy = sum_dy / count;
        let mean_dy_xhat = sum_dy_xhat / count;
        let g = gamma[c] * inv_std;
        for b in 0..batch {
            let off = (b * channels + c) * plane;
            let xc = &x[off..off + plane];
            let gc = &grad_out[off..off + plane];
            let gx = &mut grad_x[off..off + plane];
            for i in 0..plane {
                let xhat = (xc[i] - m) * inv_std;
                gx[i] += g * (gc[i] - mean_dy - xhat * mean_dy_xhat);
            }
        }
    }
}

/// Eval-mode backward: the running statistics are constants, so the map is
/// a plain per-channel affine transform.
#[allow(clippy::too_many_arguments)]
pub fn backward_eval(
    x: &[f64],
    grad_out: &[f64],
    batch: usize,
    channels: usize,
    plane: usize,
    mean: &[f64],
    var: &[f64],
    gamma: &[f64],
    grad_x: &mut [f64],
    grad_gamma: &mut [f64],
    grad_beta: &mut [f64],
) {
    for c in 0..channels {
        let m = mean[c];
        let inv_std = 1.0 / (var[c] + BN_EPS).sqrt();
        let g = gamma[c] * inv_std;
        let mut sum_dy = 0.0;
        let mut sum_dy_x = 0.0;
        for b in 0..batch {
            let off = (b * channels + c) * plane;
            let xc = &x[off..off + plane];
            let gc = &grad_out[off..off + plane];
            sum_dy += vsum(gc);
            sum_dy_x += dot(gc, xc);
            let gx = &mut grad_x[off..off + plane];
            for (d, s) in gx.iter_mut().zip(gc) {
                *d += g * s;
            }
        }
        grad_gamma[c] += inv_std * (sum_dy_x - m * sum_dy);
        grad_beta[c] += sum_dy;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_on_known_plane() {
        // One channel, batch 1: x = [1, 2, 3, 4] => mean 2.5, biased var 1.25.
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let (mean, var) = batch_stats(&x, 1, 1, 4);
        assert!((mean[0] - 2.5).abs() < 1e-15);
        assert!((var[0] - 1.25).abs() < 1e-15);
    }

    #[test]
    fn stats_span_batch_items() {
        // Two batch items, one channel of 2 elements each: all four values
        // pool into one statistic.
        let x = vec![0.0, 2.0, 4.0, 6.0];
        let (mean, var) = batch_stats(&x, 2, 1, 2);
        assert!((mean[0] - 3.0).abs() < 1e-15);
        assert!((var[0] - 5.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_unit_affine_centers_data() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let (mean, var) = batch_stats(&x, 1, 1, 4);
        let mut out = vec![0.0; 4];
        normalize_forward(&x, 1, 1, 4, &mean, &var, &[1.0], &[0.0], &mut out);
        let m: f64 = out.iter().sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-12);
        // Variance of the output is var/(var+eps), slightly below 1.
        let v: f64 = out.iter().map(|o| (o - m) * (o - m)).sum::<f64>() / 4.0;
        assert!((v - 1.25 / (1.25 + BN_EPS)).abs() < 1e-12);
    }

    #[test]
    fn first_update_seeds_running_stats() {
        let mut state = BnState::new(2);
        update_running(&mut state, &[1.0, 2.0], &[3.0, 4.0]);
        assert!(state.initialized);
        assert_eq!(state.running_mean, vec![1.0, 2.0]);
        assert_eq!(state.running_var, vec![3.0, 4.0]);
        // Second update blends with momentum 0.9.
        update_running(&mut state, &[2.0, 3.0], &[1.0, 2.0]);
        assert!((state.running_mean[0] - (0.9 * 1.0 + 0.1 * 2.0)).abs() < 1e-15);
        assert!((state.running_var[1] - (0.9 * 4.0 + 0.1 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn train_backward_sums_to_zero_per_channel() {
        // Because dx subtracts the batch means of dy and dy*xhat, the dx
        // entries of each channel must sum to ~0 whenever gamma != 0.
        let x: Vec<f64> = (0..16).map(|i| ((i * 37 % 11) as f64) * 0.3 - 1.0).collect();
        let dy: Vec<f64> = (0..16).map(|i| ((i * 17 % 7) as f64) * 0.5 - 1.5).collect();
        let (mean, var) = batch_stats(&x, 2, 2, 4);
        let mut gx = vec![0.0; 16];
        let mut gg = vec![0.0; 2];
        let mut gb = vec![0.0; 2];
        backward_train(&x, &dy, 2, 2, 4, &mean, &var, &[1.3, -0.7], &mut gx, &mut gg, &mut gb);
        for c in 0..2 {
            let mut s = 0.0;
            for b in 0..2 {
                s += gx[(b * 2 + c) * 4..][..4].iter().sum::<f64>();
            }
            assert!(s.abs() < 1e-12, "channel {c} dx sum {s}");
        }
        // dbeta is the plain per-channel sum of dy.
        let beta0: f64 = dy[0..4].iter().chain(&dy[8..12]).sum();
        assert!((gb[0] - beta0).abs() < 1e-12);
    }

    #[test]
    fn eval_backward_is_affine() {
        let x = vec![0.5, -1.0, 2.0, 0.0];
        let dy = vec![1.0, 1.0, 1.0, 1.0];
        let mean = vec![0.25];
        let var = vec![2.0];
        let mut gx = vec![0.0; 4];
        let mut gg = vec![0.0; 1];
        let mut gb = vec![0.0; 1];
        backward_eval(&x, &dy, 1, 1, 4, &mean, &var, &[2.0], &mut gx, &mut gg, &mut gb);
        let inv_std = 1.0 / (2.0 + BN_EPS).sqrt();
        for g in &gx {
            assert!((g - 2.0 * inv_std).abs() < 1e-15);
        }
        assert!((gb[0] - 4.0).abs() < 1e-15);
        let expected_gg: f64 = x.iter().map(|v| (v - 0.25) * inv_std).sum();
        assert!((gg[0] - expected_gg).abs() < 1e-12);
    }
}
