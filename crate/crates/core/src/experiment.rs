//! Experiment grid: the trained model against filtered backprojection
//! across angle counts and sensor conditions, scored per slice.
//!
//! Each grid cell fixes one ground-truth volume, one angle count, and one
//! sensor condition. The cell simulates sinograms once, corrupts them when
//! the condition asks for it, and then runs both reconstruction methods on
//! the same data, so every record pair is an apples-to-apples comparison.
//! Cells are independent by construction — private model state, private
//! derived RNG streams — which is what makes the optional worker pool
//! safe: results land in a slot per cell, so the output order and content
//! are identical no matter how many workers ran.
//!
//! PSNR is only reported for the uniform condition. Under sensor
//! non-uniformity the measured scale is unrecoverable (any per-angle gain
//! can be absorbed by the image intensity), so the scale-free Pearson
//! correlation is the only honest score there.
use std::error::Error;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;
use crate::image::Image;
use crate::metrics::{pearson_corr, psnr};
use crate::phantom::{apply_nonuniformity, sample_sensor_model, SensorMode};
use crate::pipeline::{reconstruct, train, SensorCondition, TrainConfig};
use crate::radon::{radon_forward, AngleSet, Sinogram};
/// Reconstruction method a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ours,
    Fbp,
}
impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Fbp => "fbp",
        }
    }
}
/// One ground-truth volume entering the grid.
#[derive(Debug, Clone)]
pub struct ExperimentVolume {
    pub id: String,
    pub slices: Vec<Image>,
}
/// Scores for one (volume, method, angle count, condition) cell.
#[derive(Debug, Clone)]
pub struct ExperimentRecord {
    pub volume_id: String,
    pub method: Method,
    pub n_angles: usize,
    pub condition: SensorCondition,
    /// Mean/std of per-slice PSNR; present only under uniform sensors.
    pub mean_psnr: Option<f64>,
    pub std_psnr: Option<f64>,
    pub mean_corr: f64,
    pub std_corr: f64,
    pub per_slice_psnr: Option<Vec<f64>>,
    pub per_slice_corr: Vec<f64>,
    /// Wall-clock cost of producing the reconstructions. Kept out of the
    /// CSV so identical reruns stay byte-identical.
    pub wall_seconds: f64,
    /// First reconstructed slice, kept only when the grid was asked to
    /// retain material for image panels.
    pub sample_recon: Option<Image>,
}
/// A cell (and method) that could not be scored; the rest of the grid
/// still runs.
#[derive(Debug, Clone)]
pub struct CellFailure {
    pub volume_id: String,
    pub method: Method,
    pub n_angles: usize,
    pub condition: SensorCondition,
    pub message: String,
}
impl fmt::Display for CellFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cell (volume {}, {}, n={}, {}): {}",
            self.volume_id,
            self.method.name(),
            self.n_angles,
            self.condition.name(),
            self.message
        )
    }
}
impl Error for CellFailure {}
/// Grid settings: which cells to run and how to train each one.
#[derive(Debug, Clone)]
pub struct GridConfig {
    pub train: TrainConfig,
    pub angle_counts: Vec<usize>,
    pub conditions: Vec<SensorCondition>,
    /// Distribution the non-uniform condition draws its sensors from.
    pub sensor_mode: SensorMode,
    /// Worker threads; 1 runs the cells inline.
    pub jobs: usize,
    /// Keep each record's first reconstructed slice (for image panels).
    pub keep_sample_recon: bool,
}
impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            train: TrainConfig::default(),
            angle_counts: vec![2, 4, 8, 16],
            conditions: vec![SensorCondition::Uniform, SensorCondition::NonUniform],
            sensor_mode: SensorMode::Safe,
            jobs: 1,
            keep_sample_recon: false,
        }
    }
}
/// Everything a finished grid produced: scored records in a fixed order
/// plus whatever cells failed.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub records: Vec<ExperimentRecord>,
    pub failures: Vec<CellFailure>,
}
/// Splits `base` into an independent stream for one cell; `salt`
/// separates the sensor draw from the training stream.
fn cell_seed(base: u64, volume_idx: usize, n_angles: usize, condition: SensorCondition, salt: u64) -> u64 {
    let mut z = base
        ^ (volume_idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (n_angles as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ match condition {
            SensorCondition::Uniform => 0,
            SensorCondition::NonUniform => 0x94D0_49BB_1331_11EB,
        }
        ^ salt;
    // splitmix64 finalizer: spreads structured inputs over the whole range.
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
struct CellOutput {
    records: Vec<ExperimentRecord>,
    failures: Vec<CellFailure>,
}
/// Runs one grid cell: simulate, corrupt, reconstruct both ways, score.
fn run_cell(
    volume_idx: usize,
    volume: &ExperimentVolume,
    n_angles: usize,
    condition: SensorCondition,
    config: &GridConfig,
) -> CellOutput {
    let angles = AngleSet::uniform(n_angles);
    let clean: Vec<Sinogram> =
        volume.slices.iter().map(|img| radon_forward(img, &angles)).collect();
    let measured: Vec<Sinogram> = match condition {
        SensorCondition::Uniform => clean,
        SensorCondition::NonUniform => {
            let seed = cell_seed(config.train.seed, volume_idx, n_angles, condition, 1);
            let sensors = sample_sensor_model(n_angles, seed, config.sensor_mode);
            clean
                .iter()
                .map(|s| apply_nonuniformity(s, &sensors).expect("sensor count matches angles"))
                .collect()
        }
    };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let fail = |method: Method, message: String| CellFailure {
        volume_id: volume.id.clone(),
        method,
        n_angles,
        condition,
        message,
    };
    // Trained reconstruction. Calibration is only trainable when there is
    // sensor structure to calibrate away; under uniform sensors it stays
    // the identity so the data term cannot silently rescale the image.
    let mut train_config = config.train.clone();
    train_config.seed = cell_seed(config.train.seed, volume_idx, n_angles, condition, 2);
    train_config.calib_trainable = match condition {
        SensorCondition::Uniform => false,
        SensorCondition::NonUniform => config.train.calib_trainable,
    };
    let t0 = Instant::now();
    match train(&measured, &train_config) {
        Ok(outcome) => match reconstruct(&measured, &outcome.model) {
            Ok(recons) => {
                let wall = t0.elapsed().as_secs_f64();
                match score(volume, &recons, condition, Method::Ours, n_angles, wall) {
                    Ok(mut record) => {
                        if config.keep_sample_recon {
                            record.sample_recon = recons.first().cloned();
                        }
                        records.push(record);
                    }
                    Err(e) => failures.push(fail(Method::Ours, e)),
                }
            }
            Err(e) => failures.push(fail(Method::Ours, e.to_string())),
        },
        Err(e) => failures.push(fail(Method::Ours, e.to_string())),
    }
    // Filtered backprojection on the same measurements.
    let t0 = Instant::now();
    let recons: Vec<Image> =
        measured.iter().map(|s| crate::fbp::fbp_reconstruct(s, config.train.filter)).collect();
    let wall = t0.elapsed().as_secs_f64();
    match score(volume, &recons, condition, Method::Fbp, n_angles, wall) {
        Ok(mut record) => {
            if config.keep_sample_recon {
                record.sample_recon = recons.first().cloned();
            }
            records.push(record);
        }
        Err(e) => failures.push(fail(Method::Fbp, e)),
    }
    CellOutput { records, failures }
}
/// Per-slice metrics and their aggregates for one reconstruction set.
fn score(
    volume: &ExperimentVolume,
    recons: &[Image],
    condition: SensorCondition,
    method: Method,
    n_angles: usize,
    wall_seconds: f64,
) -> Result<ExperimentRecord, String> {
    let mut corrs = Vec::with_capacity(recons.len());
    let mut psnrs = Vec::with_capacity(recons.len());
    for (truth, recon) in volume.slices.iter().zip(recons) {
        corrs.push(pearson_corr(truth, recon).map_err(|e| e.to_string())?);
        if condition == SensorCondition::Uniform {
            psnrs.push(psnr(truth, recon, 1.0).map_err(|e| e.to_string())?);
        }
    }
    let (mean_corr, std_corr) = mean_std(&corrs);
    let (mean_psnr, std_psnr, per_slice_psnr) = if condition == SensorCondition::Uniform {
        let (m, s) = mean_std(&psnrs);
        (Some(m), Some(s), Some(psnrs))
    } else {
        (None, None, None)
    };
    Ok(ExperimentRecord {
        volume_id: volume.id.clone(),
        method,
        n_angles,
        condition,
        mean_psnr,
        std_psnr,
        mean_corr,
        std_corr,
        per_slice_psnr,
        per_slice_corr: corrs,
        wall_seconds,
        sample_recon: None,
    })
}
/// Mean and population standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
/// Runs every cell of the grid. Records come back grouped by volume, then
/// angle count, then condition, with the trained method before FBP; that
/// order is part of the output contract and independent of `jobs`.
pub fn run_experiment_grid(volumes: &[ExperimentVolume], config: &GridConfig) -> GridOutcome {
    assert!(!volumes.is_empty(), "experiment grid needs at least one volume");
    assert!(!config.angle_counts.is_empty(), "experiment grid needs at least one angle count");
    assert!(!config.conditions.is_empty(), "experiment grid needs at least one sensor condition");
    let cells: Vec<(usize, usize, SensorCondition)> = volumes
        .iter()
        .enumerate()
        .flat_map(|(vi, _)| {
            config.angle_counts.iter().flat_map(move |&n| {
                config.conditions.iter().map(move |&c| (vi, n, c))
            })
        })
        .collect();
    let mut slots: Vec<Option<CellOutput>> = Vec::with_capacity(cells.len());
    slots.resize_with(cells.len(), || None);
    if config.jobs <= 1 {
        for (slot, &(vi, n, cond)) in slots.iter_mut().zip(&cells) {
            *slot = Some(run_cell(vi, &volumes[vi], n, cond, config));
        }
    } else {
        let next = AtomicUsize::new(0);
        let slots_mx = Mutex::new(&mut slots);
        std::thread::scope(|scope| {
            for _ in 0..config.jobs.min(cells.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= cells.len() {
                        break;
                    }
                    let (vi, n, cond) = cells[i];
                    let output = run_cell(vi, &volumes[vi], n, cond, config);
                    slots_mx.lock().expect("result slots lock")[i] = Some(output);
                });
            }
        });
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for slot in slots {
        let output = slot.expect("every cell ran");
        records.extend(output.records);
        failures.extend(output.failures);
    }
    GridOutcome { records, failures }
}
/// Formats records as the results CSV: one row per record, schema
/// `volume_id,method,n_angles,sensor_mode,mean_psnr,std_psnr,mean_corr,std_corr`.
/// PSNR fields are empty under non-uniform sensors. Wall-clock times are
/// deliberately absent so reruns with identical seeds are byte-identical.
pub fn records_to_csv(records: &[ExperimentRecord]) -> String {
    let mut out = String::from("volume_id,method,n_angles,sensor_mode,mean_psnr,std_psnr,mean_corr,std_corr\n");
    for r in records {
        let (mp, sp) = match (r.mean_psnr, r.std_psnr) {
            (Some(m), Some(s)) => (fmt_f64(m), fmt_f64(s)),
            _ => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.volume_id,
            r.method.name(),
            r.n_angles,
            r.condition.name(),
            mp,
            sp,
            fmt_f64(r.mean_corr),
            fmt_f64(r.std_corr),
        ));
    }
    out
}
/// Shortest-roundtrip float formatting for CSV cells, with "inf" spelled
/// out for the identical-reconstruction sentinel.
pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}
