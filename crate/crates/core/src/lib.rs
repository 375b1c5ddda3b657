//! Unsupervised sparse-view backprojection.
//!
//! This crate reconstructs 2-D images from very sparse parallel-beam
//! sinograms without any ground-truth images. A convolutional generator is
//! fed stacks of single-view backprojections and produces a reconstruction;
//! a differentiable projector maps that reconstruction back to sinogram
//! space, where it is compared against the measured data. Per-angle gain and
//! offset parameters in the projector absorb sensor non-uniformity. The
//! crate also ships the classical filtered-backprojection baseline, phantom
//! simulation, quality metrics, and an experiment grid runner.
//!
//! Layout:
//!
//! * [`autodiff`] — tape-based reverse-mode differentiation engine with the
//!   ops the model needs (conv, batch norm, ReLU, grid sampling, projection).
//! * [`radon`] — parallel-beam projection geometry: forward transform,
//!   exact-adjoint backprojection, single-view backprojection stacks.
//! * [`fbp`] — frequency-domain ramp/Hann filtering and the filtered
//!   backprojection baseline.
//! * [`model`] — the 17-layer generator, per-angle sensor calibration, and
//!   checkpoint I/O.
//! * [`pipeline`] — the training loop (sinogram consistency objective) and
//!   inference.
//! * [`phantom`] — synthetic volumes and the sensor non-uniformity model.
//! * [`metrics`] / [`experiment`] — MSE, PSNR, Pearson correlation, and the
//!   method-comparison grid.
//! * [`io`] — raw/PGM/CSV file formats.
//! * [`oracle`] — independent verification oracles (finite differences,
//!   ray-overlap integration) used by the test suites.

#![forbid(unsafe_code)]

pub mod autodiff;
pub mod experiment;
pub mod fbp;
pub mod image;
pub mod interp;
pub mod io;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod phantom;
pub mod pipeline;
pub mod radon;

pub use image::Image;
pub use radon::{AngleSet, Sinogram};
