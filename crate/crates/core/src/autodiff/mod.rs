//! Tape-based reverse-mode automatic differentiation.
//!
//! The engine is deliberately small: `f64` buffers, a flat list of recorded
//! ops, and a reverse sweep. A [`Tape`] is built per training step
//! (define-by-run): leaf buffers enter via [`Tape::constant`] or
//! [`Tape::param`], each op records enough to replay its local derivative,
//! and [`Tape::backward`] walks the ops in reverse, accumulating gradients
//! into a [`ParamStore`]. Buffers consumed by several ops sum their incoming
//! gradients; gradients of intermediate buffers are freed as soon as the op
//! that produced them has consumed its share, which keeps the peak memory of
//! a backward pass close to one extra activation.
//!
//! Determinism: every loop in forward and backward runs in a fixed order
//! with fixed reduction trees, so identical inputs produce bit-identical
//! outputs and gradients.

pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod param;

pub use adam::Adam;
pub use batchnorm::{BnState, BN_EPS, BN_MOMENTUM};
pub use param::{ParamError, ParamId, ParamStore, Parameter};

use std::rc::Rc;

use crate::interp;
use crate::radon::ProjectionGeometry;

/// Forward-pass mode: training uses batch statistics in normalization
/// layers and updates running estimates; eval uses the stored estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Handle to a buffer on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

#[derive(Debug)]
struct Buffer {
    values: Vec<f64>,
    shape: Vec<usize>,
    grad: Option<Vec<f64>>,
    param: Option<ParamId>,
}

#[derive(Debug)]
enum Op {
    Conv2d {
        x: usize,
        w: usize,
        b: usize,
        out: usize,
        batch: usize,
        cin: usize,
        cout: usize,
        h: usize,
        wd: usize,
    },
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        out: usize,
        batch: usize,
        channels: usize,
        plane: usize,
        /// Statistics actually used by this forward call (batch stats when
        /// training, running stats when evaluating).
        mean: Vec<f64>,
        var: Vec<f64>,
        mode: Mode,
    },
    Relu {
        x: usize,
        out: usize,
    },
    GridSample {
        x: usize,
        grid: usize,
        out: usize,
        batch: usize,
        channels: usize,
        h: usize,
        w: usize,
        out_h: usize,
        out_w: usize,
    },
    RadonProject {
        x: usize,
        out: usize,
        geometry: Rc<ProjectionGeometry>,
        batch: usize,
    },
    AffinePerAngle {
        x: usize,
        w: usize,
        b: usize,
        out: usize,
        batch: usize,
        angles: usize,
        bins: usize,
    },
    Mul {
        a: usize,
        b: usize,
        out: usize,
    },
    AddScaled {
        a: usize,
        b: usize,
        k: f64,
        out: usize,
    },
    SumAll {
        x: usize,
        out: usize,
    },
    MseVs {
        a: usize,
        b: usize,
        out: usize,
    },
    L1Mean {
        x: usize,
        out: usize,
    },
}

/// Records a computation and differentiates it in reverse.
#[derive(Debug, Default)]
pub struct Tape {
    bufs: Vec<Buffer>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, values: Vec<f64>, shape: Vec<usize>, param: Option<ParamId>) -> TensorId {
        let numel: usize = shape.iter().product();
        assert_eq!(values.len(), numel, "buffer does not match shape {shape:?}");
        self.bufs.push(Buffer { values, shape, grad: None, param });
        TensorId(self.bufs.len() - 1)
    }

    /// A leaf buffer with no parameter attached. Its gradient is still
    /// computed and can be read back after `backward`.
    pub fn constant(&mut self, values: Vec<f64>, shape: Vec<usize>) -> TensorId {
        self.push(values, shape, None)
    }

    /// Copies a parameter's current values onto the tape; `backward` will
    /// accumulate this buffer's gradient into the store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> TensorId {
        let p = store.get(id);
        self.push(p.values.clone(), p.shape.clone(), Some(id))
    }

    pub fn values(&self, t: TensorId) -> &[f64] {
        &self.bufs[t.0].values
    }

    pub fn shape(&self, t: TensorId) -> &[usize] {
        &self.bufs[t.0].shape
    }

    /// The value of a single-element buffer.
    pub fn scalar(&self, t: TensorId) -> f64 {
        assert_eq!(self.bufs[t.0].values.len(), 1, "scalar() on a non-scalar buffer");
        self.bufs[t.0].values[0]
    }

    /// Gradient of the last `backward` w.r.t. a leaf buffer. Gradients of
    /// op outputs are freed during the sweep, so this is only meaningful for
    /// buffers created by [`Tape::constant`] or [`Tape::param`].
    pub fn grad(&self, t: TensorId) -> Option<&[f64]> {
        self.bufs[t.0].grad.as_deref()
    }

    // ---- ops ------------------------------------------------------------

    /// Elementwise `max(x, 0)`. The subgradient at exactly zero is zero.
    pub fn relu(&mut self, x: TensorId) -> TensorId {
        let values: Vec<f64> = self.bufs[x.0].values.iter().map(|&v| v.max(0.0)).collect();
        let shape = self.bufs[x.0].shape.clone();
        let out = self.push(values, shape, None);
        self.ops.push(Op::Relu { x: x.0, out: out.0 });
        out
    }

    /// 3x3 convolution, stride 1, zero padding 1. `x` is `[batch, cin, h, w]`,
    /// `w` `[cout, cin, 3, 3]`, `b` `[cout]`; output `[batch, cout, h, w]`.
    pub fn conv2d(&mut self, x: TensorId, w: TensorId, b: TensorId) -> TensorId {
        let xs = self.bufs[x.0].shape.clone();
        let ws = self.bufs[w.0].shape.clone();
        assert_eq!(xs.len(), 4, "conv2d input must be [batch, cin, h, w]");
        assert_eq!(ws.len(), 4, "conv2d weight must be [cout, cin, 3, 3]");
        assert_eq!(ws[2..], [3, 3], "only 3x3 kernels are supported");
        assert_eq!(ws[1], xs[1], "conv2d channel mismatch");
        assert_eq!(self.bufs[b.0].shape, vec![ws[0]], "conv2d bias must be [cout]");
        let (batch, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let cout = ws[0];
        let mut out_values = vec![0.0; batch * cout * h * wd];
        conv::conv3x3_forward(
            &self.bufs[x.0].values,
            batch,
            cin,
            h,
            wd,
            &self.bufs[w.0].values,
            &self.bufs[b.0].values,
            cout,
            &mut out_values,
        );
        let out = self.push(out_values, vec![batch, cout, h, wd], None);
        self.ops.push(Op::Conv2d { x: x.0, w: w.0, b: b.0, out: out.0, batch, cin, cout, h, wd });
        out
    }

    /// Batch normalization over `[batch, channels, h, w]` with per-channel
    /// affine parameters. Training mode normalizes with batch statistics and
    /// updates `state`; eval mode uses the running statistics and requires
    /// `state` to have been initialized by at least one training call.
    pub fn batchnorm2d(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        state: &mut BnState,
        mode: Mode,
    ) -> TensorId {
        let xs = self.bufs[x.0].shape.clone();
        assert_eq!(xs.len(), 4, "batchnorm2d input must be [batch, channels, h, w]");
        let (batch, channels, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let plane = h * w;
        assert_eq!(state.channels(), channels, "BnState channel mismatch");
        assert_eq!(self.bufs[gamma.0].values.len(), channels);
        assert_eq!(self.bufs[beta.0].values.len(), channels);
        if mode == Mode::Eval {
            assert!(
                state.initialized,
                "batchnorm2d eval before any training step: running stats are uninitialized"
            );
        }
        let (mean, var) = match mode {
            Mode::Train => {
                let (m, v) = batchnorm::batch_stats(&self.bufs[x.0].values, batch, channels, plane);
                batchnorm::update_running(state, &m, &v);
                (m, v)
            }
            Mode::Eval => (state.running_mean.clone(), state.running_var.clone()),
        };
        let mut out_values = vec![0.0; batch * channels * plane];
        batchnorm::normalize_forward(
            &self.bufs[x.0].values,
            batch,
            channels,
            plane,
            &mean,
            &var,
            &self.bufs[gamma.0].values,
            &self.bufs[beta.0].values,
            &mut out_values,
        );
        let out = self.push(out_values, xs, None);
        self.ops.push(Op::BatchNorm {
            x: x.0,
            gamma: gamma.0,
            beta: beta.0,
            out: out.0,
            batch,
            channels,
            plane,
            mean,
            var,
            mode,
        });
        out
    }

    /// Bilinear sampling of `x` `[batch, channels, h, w]` through a fixed
    /// normalized grid `[out_h, out_w, 2]` of `(gx, gy)` pairs. Gradients
    /// flow into `x` only; the grid is geometry, not a trainable quantity.
    pub fn grid_sample(&mut self, x: TensorId, grid: TensorId) -> TensorId {
        let xs = self.bufs[x.0].shape.clone();
        let gs = self.bufs[grid.0].shape.clone();
        assert_eq!(xs.len(), 4, "grid_sample input must be [batch, channels, h, w]");
        assert_eq!(gs.len(), 3, "grid must be [out_h, out_w, 2]");
        assert_eq!(gs[2], 2, "grid last dim must hold (gx, gy)");
        let (batch, channels, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (out_h, out_w) = (gs[0], gs[1]);
        let mut out_values = vec![0.0; batch * channels * out_h * out_w];
        for b in 0..batch {
            for c in 0..channels {
                let src = &self.bufs[x.0].values[(b * channels + c) * h * w..][..h * w];
                let dst = &mut out_values[(b * channels + c) * out_h * out_w..][..out_h * out_w];
                interp::sample_plane(src, h, w, &self.bufs[grid.0].values, out_h, out_w, dst);
            }
        }
        let out = self.push(out_values, vec![batch, channels, out_h, out_w], None);
        self.ops.push(Op::GridSample {
            x: x.0,
            grid: grid.0,
            out: out.0,
            batch,
            channels,
            h,
            w,
            out_h,
            out_w,
        });
        out
    }

    /// Parallel-beam projection of `[batch, 1, side, side]` images at every
    /// angle of the geometry, producing sinograms `[batch, angles, side]`.
    pub fn radon_project(&mut self, x: TensorId, geometry: &Rc<ProjectionGeometry>) -> TensorId {
        let xs = self.bufs[x.0].shape.clone();
        assert_eq!(xs.len(), 4, "radon_project input must be [batch, 1, side, side]");
        assert_eq!(xs[1], 1, "radon_project expects a single channel");
        assert_eq!(xs[2], geometry.side(), "image side does not match geometry");
        assert_eq!(xs[3], geometry.side(), "image side does not match geometry");
        let batch = xs[0];
        let side = geometry.side();
        let n = geometry.angle_count();
        let mut out_values = vec![0.0; batch * n * side];
        for b in 0..batch {
            let plane = &self.bufs[x.0].values[b * side * side..][..side * side];
            let rows = &mut out_values[b * n * side..][..n * side];
            geometry.project_plane(plane, rows);
        }
        let out = self.push(out_values, vec![batch, n, side], None);
        self.ops.push(Op::RadonProject { x: x.0, out: out.0, geometry: Rc::clone(geometry), batch });
        out
    }

    /// Per-angle affine map on sinograms: `out[b][i][j] = w[i] * x[b][i][j]
    /// + b[i]`, the sensor-calibration layer of the projector.
    pub fn affine_per_angle(&mut self, x: TensorId, w: TensorId, b: TensorId) -> TensorId {
        let xs = self.bufs[x.0].shape.clone();
        assert_eq!(xs.len(), 3, "affine_per_angle input must be [batch, angles, bins]");
        let (batch, angles, bins) = (xs[0], xs[1], xs[2]);
        assert_eq!(self.bufs[w.0].values.len(), angles, "gain must have one entry per angle");
        assert_eq!(self.bufs[b.0].values.len(), angles, "offset must have one entry per angle");
        let mut out_values = vec![0.0; batch * angles * bins];
        for bi in 0..batch {
            for i in 0..angles {
                let wi = self.bufs[w.0].values[i];
                let oi = self.bufs[b.0].values[i];
                let src = &self.bufs[x.0].values[(bi * angles + i) * bins..][..bins];
                let dst = &mut out_values[(bi * angles + i) * bins..][..bins];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = wi * s + oi;
                }
            }
        }
        let out = self.push(out_values, xs, None);
        self.ops.push(Op::AffinePerAngle {
            x: x.0,
            w: w.0,
            b: b.0,
            out: out.0,
            batch,
            angles,
            bins,
        });
        out
    }

    /// Elementwise product of two same-shape buffers.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        assert_eq!(self.bufs[a.0].shape, self.bufs[b.0].shape, "mul shape mismatch");
        let values: Vec<f64> = self.bufs[a.0]
            .values
            .iter()
            .zip(&self.bufs[b.0].values)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.bufs[a.0].shape.clone();
        let out = self.push(values, shape, None);
        self.ops.push(Op::Mul { a: a.0, b: b.0, out: out.0 });
        out
    }

    /// `a + k * b`, elementwise over same-shape buffers.
    pub fn add_scaled(&mut self, a: TensorId, b: TensorId, k: f64) -> TensorId {
        assert_eq!(self.bufs[a.0].shape, self.bufs[b.0].shape, "add_scaled shape mismatch");
        let values: Vec<f64> = self.bufs[a.0]
            .values
            .iter()
            .zip(&self.bufs[b.0].values)
            .map(|(x, y)| x + k * y)
            .collect();
        let shape = self.bufs[a.0].shape.clone();
        let out = self.push(values, shape, None);
        self.ops.push(Op::AddScaled { a: a.0, b: b.0, k, out: out.0 });
        out
    }

    /// Sum of all elements, as a scalar buffer.
    pub fn sum(&mut self, x: TensorId) -> TensorId {
        let total = conv::vsum(&self.bufs[x.0].values);
        let out = self.push(vec![total], vec![1], None);
        self.ops.push(Op::SumAll { x: x.0, out: out.0 });
        out
    }

    /// Mean squared difference between two same-shape buffers, as a scalar.
    pub fn mse_vs(&mut self, a: TensorId, b: TensorId) -> TensorId {
        assert_eq!(self.bufs[a.0].shape, self.bufs[b.0].shape, "mse_vs shape mismatch");
        let av = &self.bufs[a.0].values;
        let bv = &self.bufs[b.0].values;
        let mut acc = [0.0f64; 8];
        let mut ca = av.chunks_exact(8);
        let mut cb = bv.chunks_exact(8);
        for (xa, xb) in (&mut ca).zip(&mut cb) {
            for lane in 0..8 {
                let d = xa[lane] - xb[lane];
                acc[lane] += d * d;
            }
        }
        let mut total = acc.iter().sum::<f64>();
        for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
            let d = x - y;
            total += d * d;
        }
        let mean = total / av.len() as f64;
        let out = self.push(vec![mean], vec![1], None);
        self.ops.push(Op::MseVs { a: a.0, b: b.0, out: out.0 });
        out
    }

    /// Mean absolute value of all elements, as a scalar.
    pub fn l1_mean(&mut self, x: TensorId) -> TensorId {
        let xv = &self.bufs[x.0].values;
        let mut acc = [0.0f64; 8];
        let mut cx = xv.chunks_exact(8);
        for xa in &mut cx {
            for lane in 0..8 {
                acc[lane] += xa[lane].abs();
            }
        }
        let mut total = acc.iter().sum::<f64>();
        for v in cx.remainder() {
            total += v.abs();
        }
        let mean = total / xv.len() as f64;
        let out = self.push(vec![mean], vec![1], None);
        self.ops.push(Op::L1Mean { x: x.0, out: out.0 });
        out
    }

    // ---- backward -------------------------------------------------------

    fn accumulate(&mut self, id: usize, delta: Vec<f64>) {
        let buf = &mut self.bufs[id];
        match &mut buf.grad {
            None => buf.grad = Some(delta),
            Some(g) => {
                for (a, b) in g.iter_mut().zip(&delta) {
                    *a += b;
                }
            }
        }
    }

    /// Reverse sweep from a scalar loss. Parameter gradients are added into
    /// `store` (so two backward calls without `zero_grad` accumulate); leaf
    /// buffer gradients stay readable via [`Tape::grad`].
    pub fn backward(&mut self, loss: TensorId, store: &mut ParamStore) {
        assert_eq!(self.bufs[loss.0].values.len(), 1, "backward requires a scalar loss");
        for buf in &mut self.bufs {
            buf.grad = None;
        }
        self.bufs[loss.0].grad = Some(vec![1.0]);

        for i in (0..self.ops.len()).rev() {
            let out_id = match &self.ops[i] {
                Op::Conv2d { out, .. }
                | Op::BatchNorm { out, .. }
                | Op::Relu { out, .. }
                | Op::GridSample { out, .. }
                | Op::RadonProject { out, .. }
                | Op::AffinePerAngle { out, .. }
                | Op::Mul { out, .. }
                | Op::AddScaled { out, .. }
                | Op::SumAll { out, .. }
                | Op::MseVs { out, .. }
                | Op::L1Mean { out, .. } => *out,
            };
            // Freeing the output gradient here both caps peak memory and
            // skips ops that never fed the loss.
            let g_out = match self.bufs[out_id].grad.take() {
                Some(g) => g,
                None => continue,
            };
            match &self.ops[i] {
                Op::Conv2d { x, w, b, batch, cin, cout, h, wd, .. } => {
                    let (x, w, b) = (*x, *w, *b);
                    let (batch, cin, cout, h, wd) = (*batch, *cin, *cout, *h, *wd);
                    let mut gx = vec![0.0; batch * cin * h * wd];
                    conv::conv3x3_backward_input(
                        &g_out,
                        batch,
                        cin,
                        h,
                        wd,
                        &self.bufs[w].values,
                        cout,
                        &mut gx,
                    );
                    let mut gw = vec![0.0; cout * cin * 9];
                    conv::conv3x3_backward_weight(
                        &self.bufs[x].values,
                        &g_out,
                        batch,
                        cin,
                        h,
                        wd,
                        cout,
                        &mut gw,
                    );
                    let mut gb = vec![0.0; cout];
                    conv::conv3x3_backward_bias(&g_out, batch, h, wd, cout, &mut gb);
                    self.accumulate(x, gx);
                    self.accumulate(w, gw);
                    self.accumulate(b, gb);
                }
                Op::BatchNorm { x, gamma, beta, batch, channels, plane, mean, var, mode, .. } => {
                    let (x, gamma, beta) = (*x, *gamma, *beta);
                    let (batch, channels, plane) = (*batch, *channels, *plane);
                    let mut gx = vec![0.0; batch * channels * plane];
                    let mut gg = vec![0.0; channels];
                    let mut gb = vec![0.0; channels];
                    match mode {
                        Mode::Train => batchnorm::backward_train(
                            &self.bufs[x].values,
                            &g_out,
                            batch,
                            channels,
                            plane,
                            mean,
                            var,
                            &self.bufs[gamma].values,
                            &mut gx,
                            &mut gg,
                            &mut gb,
                        ),
                        Mode::Eval => batchnorm::backward_eval(
                            &self.bufs[x].values,
                            &g_out,
                            batch,
                            channels,
                            plane,
                            mean,
                            var,
                            &self.bufs[gamma].values,
                            &mut gx,
                            &mut gg,
                            &mut gb,
                        ),
                    }
                    self.accumulate(x, gx);
                    self.accumulate(gamma, gg);
                    self.accumulate(beta, gb);
                }
                Op::Relu { x, out } => {
                    let (x, out) = (*x, *out);
                    let gx: Vec<f64> = self.bufs[out]
                        .values
                        .iter()
                        .zip(&g_out)
                        .map(|(&o, &g)| if o > 0.0 { g } else { 0.0 })
                        .collect();
                    self.accumulate(x, gx);
                }
                Op::GridSample { x, grid, batch, channels, h, w, out_h, out_w, .. } => {
                    let (x, grid) = (*x, *grid);
                    let (batch, channels, h, w) = (*batch, *channels, *h, *w);
                    let (out_h, out_w) = (*out_h, *out_w);
                    let mut gx = vec![0.0; batch * channels * h * w];
                    for b in 0..batch {
                        for c in 0..channels {
                            let dst = &mut gx[(b * channels + c) * h * w..][..h * w];
                            let src = &g_out[(b * channels + c) * out_h * out_w..][..out_h * out_w];
                            interp::scatter_plane(
                                dst,
                                h,
                                w,
                                &self.bufs[grid].values,
                                out_h,
                                out_w,
                                src,
                            );
                        }
                    }
                    self.accumulate(x, gx);
                }
                Op::RadonProject { x, geometry, batch, .. } => {
                    let x = *x;
                    let batch = *batch;
                    let side = geometry.side();
                    let n = geometry.angle_count();
                    let mut gx = vec![0.0; batch * side * side];
                    for b in 0..batch {
                        let rows = &g_out[b * n * side..][..n * side];
                        let plane = &mut gx[b * side * side..][..side * side];
                        geometry.backproject_rows(rows, plane);
                    }
                    self.accumulate(x, gx);
                }
                Op::AffinePerAngle { x, w, b, batch, angles, bins, .. } => {
                    let (x, w, b) = (*x, *w, *b);
                    let (batch, angles, bins) = (*batch, *angles, *bins);
                    let mut gx = vec![0.0; batch * angles * bins];
                    let mut gw = vec![0.0; angles];
                    let mut gb = vec![0.0; angles];
                    for bi in 0..batch {
                        for i in 0..angles {
                            let off = (bi * angles + i) * bins;
                            let go = &g_out[off..off + bins];
                            let xv = &self.bufs[x].values[off..off + bins];
                            let wi = self.bufs[w].values[i];
                            for (d, g) in gx[off..off + bins].iter_mut().zip(go) {
                                *d += wi * g;
                            }
                            gw[i] += conv::dot(go, xv);
                            gb[i] += conv::vsum(go);
                        }
                    }
                    self.accumulate(x, gx);
                    self.accumulate(w, gw);
                    self.accumulate(b, gb);
                }
                Op::Mul { a, b, .. } => {
                    let (a, b) = (*a, *b);
                    let ga: Vec<f64> =
                        g_out.iter().zip(&self.bufs[b].values).map(|(g, v)| g * v).collect();
                    let gb: Vec<f64> =
                        g_out.iter().zip(&self.bufs[a].values).map(|(g, v)| g * v).collect();
                    self.accumulate(a, ga);
                    self.accumulate(b, gb);
                }
                Op::AddScaled { a, b, k, .. } => {
                    let (a, b, k) = (*a, *b, *k);
                    let gb: Vec<f64> = g_out.iter().map(|g| g * k).collect();
                    self.accumulate(a, g_out.clone());
                    self.accumulate(b, gb);
                }
                Op::SumAll { x, .. } => {
                    let x = *x;
                    let gx = vec![g_out[0]; self.bufs[x].values.len()];
                    self.accumulate(x, gx);
                }
                Op::MseVs { a, b, .. } => {
                    let (a, b) = (*a, *b);
                    let scale = 2.0 * g_out[0] / self.bufs[a].values.len() as f64;
                    let ga: Vec<f64> = self.bufs[a]
                        .values
                        .iter()
                        .zip(&self.bufs[b].values)
                        .map(|(x, y)| scale * (x - y))
                        .collect();
                    let gb: Vec<f64> = ga.iter().map(|g| -g).collect();
                    self.accumulate(a, ga);
                    self.accumulate(b, gb);
                }
                Op::L1Mean { x, .. } => {
                    let x = *x;
                    let scale = g_out[0] / self.bufs[x].values.len() as f64;
                    let gx: Vec<f64> = self.bufs[x]
                        .values
                        .iter()
                        .map(|&v| {
                            if v > 0.0 {
                                scale
                            } else if v < 0.0 {
                                -scale
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    self.accumulate(x, gx);
                }
            }
        }

        // Hand parameter gradients to the store.
        for buf in &mut self.bufs {
            if let (Some(pid), Some(grad)) = (buf.param, buf.grad.as_ref()) {
                store.accumulate_grad(pid, grad);
            }
        }
    }
}
