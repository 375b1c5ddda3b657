//! The unsupervised training loop and inference path.
//!
//! Training sees nothing but measured sinograms: each step feeds a batch of
//! per-angle backprojection stacks through the generator, re-projects the
//! reconstructions through the differentiable projector, and minimizes the
//! mean squared mismatch with the measurements plus a small L1 penalty on
//! the reconstruction. Ground-truth images exist only on the evaluation
//! side — [`train`] cannot even accept them.

use std::fmt;
use std::rc::Rc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Adam, Mode, Tape, TensorId};
use crate::fbp::Filter;
use crate::image::Image;
use crate::model::{generator_forward, init_params, projector_forward, Model};
use crate::radon::{single_view_backprojections_with, AngleSet, ProjectionGeometry, Sinogram};

/// Hyperparameters for one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Weight of the L1 sparsity term.
    pub alpha: f64,
    /// Adam learning rate.
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Whether the per-angle sensor response (w, b) trains alongside the
    /// generator. Leave off for uniform sensors.
    pub calib_trainable: bool,
    /// Filter used when a baseline reconstruction is requested alongside.
    pub filter: Filter,
    /// Print a progress line every this many epochs; 0 keeps quiet.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 200.0,
            lr: 1e-3,
            epochs: 30,
            batch_size: 8,
            seed: 0,
            calib_trainable: false,
            filter: Filter::default(),
            log_every: 0,
        }
    }
}

/// Whether a dataset's measurements came from uniform or per-angle-distorted
/// sensors. Decides which quality metric is meaningful downstream: absolute
/// ones for uniform sensors, scale-free correlation otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorCondition {
    Uniform,
    NonUniform,
}

impl SensorCondition {
    pub fn parse(name: &str) -> Option<SensorCondition> {
        match name {
            "uniform" => Some(SensorCondition::Uniform),
            "nonuniform" | "non-uniform" => Some(SensorCondition::NonUniform),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SensorCondition::Uniform => "uniform",
            SensorCondition::NonUniform => "nonuniform",
        }
    }
}

/// One scan: the measured sinograms per slice, and — for evaluation only —
/// the images they came from. The training entry point takes the slice
/// list alone, so the ground truth is structurally out of its reach.
#[derive(Debug, Clone)]
pub struct VolumeDataset {
    slices: Vec<Sinogram>,
    pub sensor_mode: SensorCondition,
    ground_truth: Option<Vec<Image>>,
}

/// A structurally invalid dataset or training input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetError {
    Empty,
    MixedShapes { slice: usize },
    GroundTruthMismatch { slices: usize, images: usize },
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::Empty => write!(f, "a dataset needs at least one slice"),
            DatasetError::MixedShapes { slice } => {
                write!(f, "slice {slice} disagrees with slice 0 on angles or detector bins")
            }
            DatasetError::GroundTruthMismatch { slices, images } => {
                write!(f, "{slices} slices but {images} ground-truth images")
            }
        }
    }
}

impl std::error::Error for DatasetError {}

impl VolumeDataset {
    pub fn new(
        slices: Vec<Sinogram>,
        sensor_mode: SensorCondition,
        ground_truth: Option<Vec<Image>>,
    ) -> Result<Self, DatasetError> {
        validate_slices(&slices)?;
        if let Some(gt) = &ground_truth {
            if gt.len() != slices.len() {
                return Err(DatasetError::GroundTruthMismatch {
                    slices: slices.len(),
                    images: gt.len(),
                });
            }
        }
        Ok(VolumeDataset { slices, sensor_mode, ground_truth })
    }

    /// The measured sinograms — the only thing training may look at.
    pub fn measurements(&self) -> &[Sinogram] {
        &self.slices
    }

    /// Ground truth for the evaluation path; `None` for real measurements.
    pub fn ground_truth(&self) -> Option<&[Image]> {
        self.ground_truth.as_deref()
    }

    pub fn angles(&self) -> &AngleSet {
        self.slices[0].angles()
    }

    pub fn side(&self) -> usize {
        self.slices[0].bins()
    }

    pub fn slice_count(&self) -> usize {
        self.slices.len()
    }
}

fn validate_slices(slices: &[Sinogram]) -> Result<(), DatasetError> {
    if slices.is_empty() {
        return Err(DatasetError::Empty);
    }
    for (i, s) in slices.iter().enumerate().skip(1) {
        if s.angles() != slices[0].angles() || s.bins() != slices[0].bins() {
            return Err(DatasetError::MixedShapes { slice: i });
        }
    }
    Ok(())
}

/// The training objective's pieces, as tape nodes: the sinogram-consistency
/// mean squared error, the mean absolute reconstruction value, and their
/// weighted total.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveTerms {
    pub total: TensorId,
    pub data_term: TensorId,
    pub l1_term: TensorId,
}

/// Builds the loss `mean((measured - predicted)^2) + alpha * mean(|recon|)`
/// on the tape. Both terms are per-element means, so `alpha` keeps the same
/// meaning across resolutions and angle counts.
pub fn objective(
    tape: &mut Tape,
    measured: TensorId,
    predicted: TensorId,
    recon: TensorId,
    alpha: f64,
) -> ObjectiveTerms {
    assert!(alpha >= 0.0, "the sparsity weight cannot be negative");
    let data_term = tape.mse_vs(predicted, measured);
    let l1_term = tape.l1_mean(recon);
    let total = tape.add_scaled(data_term, l1_term, alpha);
    ObjectiveTerms { total, data_term, l1_term }
}

/// One epoch's averaged loss components and wall time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub data_term: f64,
    pub l1_term: f64,
    pub total: f64,
    pub wall_ms: f64,
}

/// Per-epoch training record plus free-form notes (batchnorm fallbacks,
/// soft-check observations).
#[derive(Debug, Clone, Default)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
    pub notes: Vec<String>,
}

impl TrainingTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,data_term,l1_term,total,wall_ms\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.data_term, r.l1_term, r.total, r.wall_ms
            ));
        }
        out
    }
}

/// Why a training run stopped without a model.
#[derive(Debug)]
pub enum TrainError {
    BadDataset(DatasetError),
    /// The loss left the finite range; the snapshot names the epoch and the
    /// last loss values seen.
    Diverged { epoch: usize, data_term: f64, l1_term: f64 },
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::BadDataset(e) => write!(f, "invalid training input: {e}"),
            TrainError::Diverged { epoch, data_term, l1_term } => write!(
                f,
                "loss diverged at epoch {epoch} (data term {data_term:.3e}, l1 term \
                 {l1_term:.3e}); try a smaller learning rate"
            ),
        }
    }
}

impl std::error::Error for TrainError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            TrainError::BadDataset(e) => Some(e),
            TrainError::Diverged { .. } => None,
        }
    }
}

impl From<DatasetError> for TrainError {
    fn from(e: DatasetError) -> Self {
        TrainError::BadDataset(e)
    }
}

/// A finished training run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub trace: TrainingTrace,
}

/// Trains a fresh model against measured sinograms alone.
///
/// Each epoch shuffles the slice order (seeded), batches the precomputed
/// backprojection stacks, and takes one Adam step per batch on the
/// [`objective`]. The returned trace holds per-epoch averaged loss terms.
pub fn train(measured: &[Sinogram], config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    validate_slices(measured)?;
    assert!(config.batch_size >= 1, "batch size must be positive");
    assert!(config.lr > 0.0, "learning rate must be positive");

    let n = measured[0].angle_count();
    let side = measured[0].bins();
    let plane = side * side;
    let geometry = Rc::new(ProjectionGeometry::new(side, measured[0].angles().clone()));

    let mut model = init_params(n, config.seed, config.calib_trainable);
    let mut opt = Adam::new(&model.store, config.lr);
    let mut trace = TrainingTrace::default();

    // The network input never changes across epochs; build it once.
    let stacks: Vec<Vec<f64>> =
        measured.iter().map(|s| single_view_backprojections_with(&geometry, s)).collect();

    if measured.len() == 1 || config.batch_size == 1 {
        trace.notes.push(
            "single-slice batches: batch normalization reduces to per-slice statistics".into(),
        );
    }

    let mut order: Vec<usize> = (0..measured.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9E37_79B9_7F4A_7C15);

    for epoch in 0..config.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);

        let mut sums = [0.0f64; 3]; // data, l1, total — weighted by batch size
        for batch in order.chunks(config.batch_size) {
            let b = batch.len();
            let mut stack_vals = Vec::with_capacity(b * n * plane);
            let mut target_vals = Vec::with_capacity(b * n * side);
            for &s in batch {
                stack_vals.extend_from_slice(&stacks[s]);
                target_vals.extend_from_slice(measured[s].data());
            }

            let mut tape = Tape::new();
            let stack = tape.constant(stack_vals, vec![b, n, side, side]);
            let target = tape.constant(target_vals, vec![b, n, side]);
            let recon =
                generator_forward(&mut tape, stack, &model.store, &mut model.generator, Mode::Train);
            let predicted =
                projector_forward(&mut tape, recon, &model.store, &geometry, &model.calibration);
            let terms = objective(&mut tape, target, predicted, recon, config.alpha);

            let (data_v, l1_v) = (tape.scalar(terms.data_term), tape.scalar(terms.l1_term));
            let total_v = tape.scalar(terms.total);
            if !total_v.is_finite() {
                return Err(TrainError::Diverged { epoch, data_term: data_v, l1_term: l1_v });
            }
            sums[0] += data_v * b as f64;
            sums[1] += l1_v * b as f64;
            sums[2] += total_v * b as f64;

            tape.backward(terms.total, &mut model.store);
            opt.step(&mut model.store).expect("every trainable parameter was on the tape");
            model.store.zero_grad();
        }

        let inv = 1.0 / measured.len() as f64;
        let row = TraceRow {
            epoch,
            data_term: sums[0] * inv,
            l1_term: sums[1] * inv,
            total: sums[2] * inv,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        if config.log_every > 0 && (epoch % config.log_every == 0 || epoch + 1 == config.epochs) {
            eprintln!(
                "epoch {:>4}/{}  data {:.3e}  l1 {:.3e}  total {:.3e}  ({:.0} ms)",
                epoch + 1,
                config.epochs,
                row.data_term,
                row.l1_term,
                row.total,
                row.wall_ms
            );
        }
        trace.rows.push(row);
    }

    note_loss_regressions(&mut trace);
    Ok(TrainOutcome { model, trace })
}

/// Soft convergence check: flag any 50-epoch window whose mean total loss
/// rose over the preceding window. Observational only.
fn note_loss_regressions(trace: &mut TrainingTrace) {
    const WINDOW: usize = 50;
    let totals: Vec<f64> = trace.rows.iter().map(|r| r.total).collect();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let mut worst: Option<(usize, f64)> = None;
    for end in (2 * WINDOW..=totals.len()).step_by(WINDOW) {
        let prev = mean(&totals[end - 2 * WINDOW..end - WINDOW]);
        let cur = mean(&totals[end - WINDOW..end]);
        if cur > prev {
            let ratio = cur / prev;
            if worst.map_or(true, |(_, w)| ratio > w) {
                worst = Some((end, ratio));
            }
        }
    }
    if let Some((end, ratio)) = worst {
        trace.notes.push(format!(
            "mean loss over epochs {}..{} rose to {ratio:.3}x the previous window",
            end - WINDOW,
            end
        ));
    }
}

/// Why inference could not run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReconstructError {
    BadDataset(DatasetError),
    /// The model has never taken a training step, so its normalization
    /// statistics are unset.
    UninitializedStats,
}

impl fmt::Display for ReconstructError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReconstructError::BadDataset(e) => write!(f, "invalid inference input: {e}"),
            ReconstructError::UninitializedStats => {
                write!(f, "model has uninitialized normalization statistics; train it first")
            }
        }
    }
}

impl std::error::Error for ReconstructError {}

impl From<DatasetError> for ReconstructError {
    fn from(e: DatasetError) -> Self {
        ReconstructError::BadDataset(e)
    }
}

/// Runs the trained generator over every slice in eval mode (frozen
/// normalization statistics) and returns the reconstructions.
pub fn reconstruct(measured: &[Sinogram], model: &Model) -> Result<Vec<Image>, ReconstructError> {
    validate_slices(measured)?;
    if model.generator.bn_states().iter().any(|s| !s.initialized) {
        return Err(ReconstructError::UninitializedStats);
    }
    let n = measured[0].angle_count();
    let side = measured[0].bins();
    let geometry = ProjectionGeometry::new(side, measured[0].angles().clone());

    // Eval mode never touches the running stats, but the forward signature
    // is shared with training; work on a scratch copy.
    let mut generator = model.generator.clone();
    let mut out = Vec::with_capacity(measured.len());
    for sino in measured {
        let stack_vals = single_view_backprojections_with(&geometry, sino);
        let mut tape = Tape::new();
        let stack = tape.constant(stack_vals, vec![1, n, side, side]);
        let recon = generator_forward(&mut tape, stack, &model.store, &mut generator, Mode::Eval);
        out.push(Image::from_pixels(side, tape.values(recon).to_vec()));
    }
    Ok(out)
}
