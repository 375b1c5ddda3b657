//! The five subcommands: simulate, fbp, train, eval, compare.
//!
//! Each command resolves its configuration (flags over config file over
//! defaults), opens a [`RunDir`], writes the manifest, produces its
//! artifacts, then rewrites the manifest with the final artifact list and
//! commits. Any error on the way unwinds through the [`RunDir`] rollback,
//! so failed runs leave no partial outputs.
//!
//! Commands that consume volumes accept either one file or a directory;
//! a directory is filtered by artifact prefix (`sino_*`, `recon_*`,
//! `truth_*`) and processed in name order, which matches slice order
//! because indices are zero-padded.

use std::fs;
use std::path::{Path, PathBuf};

use sparseproj::experiment::{
    fmt_f64, records_to_csv, run_experiment_grid, ExperimentVolume, GridConfig, Method,
};
use sparseproj::fbp::{fbp_reconstruct, Filter};
use sparseproj::image::Image;
use sparseproj::io::{
    load_image, load_sinogram, save_image, save_sensor_model, save_sinogram,
};
use sparseproj::metrics::{pearson_corr, psnr};
use sparseproj::phantom::{
    apply_nonuniformity, make_phantom_volume, sample_sensor_model, PhantomKind, PhantomSpec,
    SensorMode,
};
use sparseproj::pipeline::{reconstruct, train, SensorCondition, TrainConfig};
use sparseproj::radon::{radon_forward, AngleSet, Sinogram};

use crate::config::{resolve_train_config, ConfigMap, TrainOverrides};
use crate::error::CliError;
use crate::manifest::{Manifest, RunDir};
use crate::{CompareArgs, EvalArgs, FbpArgs, SimulateArgs, TrainArgs};

/// Peak value phantoms are normalized to; the PSNR reference.
const MAX_VALUE: f64 = 1.0;

/// Splits independent seed streams off one base seed.
fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SENSOR_SEED_SALT: u64 = 1;
const VOLUME_SEED_SALT: u64 = 100;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn data(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}

/// Lists the input files for a volume argument: a file is taken as-is, a
/// directory is filtered to `{prefix}_*.{ext}` and sorted by name.
fn list_inputs(path: &Path, prefix: &str, ext: &str) -> Result<Vec<PathBuf>, CliError> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(data(format!("{}: no such file or directory", path.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| data(format!("{}: {e}", path.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with(&format!("{prefix}_")) && n.ends_with(&format!(".{ext}")))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(data(format!("{}: no {prefix}_*.{ext} files found", path.display())));
    }
    Ok(files)
}

fn load_sinograms(paths: &[PathBuf]) -> Result<Vec<Sinogram>, CliError> {
    paths.iter().map(|p| load_sinogram(p).map_err(|e| CliError::in_file(p, e))).collect()
}

fn load_images(paths: &[PathBuf]) -> Result<Vec<Image>, CliError> {
    paths.iter().map(|p| load_image(p).map_err(|e| CliError::in_file(p, e))).collect()
}

fn echo_train_config(manifest: &mut Manifest, config: &TrainConfig) {
    manifest.set("alpha", config.alpha);
    manifest.set("lr", config.lr);
    manifest.set("epochs", config.epochs);
    manifest.set("batch_size", config.batch_size);
    manifest.set("seed", config.seed);
    manifest.set("calib_trainable", config.calib_trainable);
    manifest.set("filter", config.filter.name());
    manifest.set("log_every", config.log_every);
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let kind = PhantomKind::parse(&args.phantom)
        .ok_or_else(|| usage(format!("--phantom: unknown phantom {:?} (shepp-logan|random-ellipses)", args.phantom)))?;
    let mode = match &args.nonuniform {
        None => None,
        Some(name) => Some(SensorMode::parse(name).ok_or_else(|| {
            usage(format!("--nonuniform: unknown sensor mode {name:?} (paper|safe)"))
        })?),
    };
    if args.side < 16 {
        return Err(usage(format!("--side must be at least 16, got {}", args.side)));
    }
    if args.slices == 0 {
        return Err(usage("--slices must be at least 1"));
    }
    if args.angles == 0 {
        return Err(usage("--angles must be at least 1"));
    }
    if !(0.0..=1.0).contains(&args.drift) {
        return Err(usage(format!("--drift must lie in [0, 1], got {}", args.drift)));
    }

    let spec = PhantomSpec {
        kind,
        side: args.side,
        n_slices: args.slices,
        seed: args.seed,
        drift: args.drift,
    };
    let truth = make_phantom_volume(&spec);
    let angles = AngleSet::uniform(args.angles);
    let clean: Vec<Sinogram> = truth.iter().map(|img| radon_forward(img, &angles)).collect();
    let sensors = mode
        .map(|m| sample_sensor_model(args.angles, derive_seed(args.seed, SENSOR_SEED_SALT), m));
    let measured: Vec<Sinogram> = match &sensors {
        None => clean,
        Some(model) => clean
            .iter()
            .map(|s| apply_nonuniformity(s, model).expect("model drawn for this angle count"))
            .collect(),
    };

    let mut run = RunDir::create(&args.out)?;
    let mut manifest = Manifest::new("simulate");
    manifest.set("phantom", kind.name());
    manifest.set("side", args.side);
    manifest.set("slices", args.slices);
    manifest.set("angles", args.angles);
    manifest.set("seed", args.seed);
    manifest.set("drift", args.drift);
    manifest.set("nonuniform", mode.map(|m| m.name()).unwrap_or("off"));
    run.write_manifest(&manifest)?;

    for (i, (img, sino)) in truth.iter().zip(&measured).enumerate() {
        let truth_name = format!("truth_{i:03}.img");
        let sino_name = format!("sino_{i:03}.sin");
        run.save_with(&truth_name, |p| save_image(p, img))?;
        run.save_with(&sino_name, |p| save_sinogram(p, sino))?;
        manifest.artifact(&truth_name);
        manifest.artifact(&sino_name);
    }
    if let Some(model) = &sensors {
        run.save_with("sensors.csv", |p| save_sensor_model(p, model))?;
        manifest.artifact("sensors.csv");
    }
    run.write_manifest(&manifest)?;
    run.commit();
    Ok(())
}

pub fn cmd_fbp(args: &FbpArgs) -> Result<(), CliError> {
    let filter = Filter::parse(&args.filter)
        .ok_or_else(|| usage(format!("--filter: unknown filter {:?} (ramp|hann)", args.filter)))?;
    let paths = list_inputs(&args.input, "sino", "sin")?;
    let sinos = load_sinograms(&paths)?;

    let mut run = RunDir::create(&args.out)?;
    let mut manifest = Manifest::new("fbp");
    manifest.set("in", args.input.display());
    manifest.set("filter", filter.name());
    manifest.set("slices", sinos.len());
    run.write_manifest(&manifest)?;

    for (i, sino) in sinos.iter().enumerate() {
        let name = format!("recon_{i:03}.img");
        let img = fbp_reconstruct(sino, filter);
        run.save_with(&name, |p| save_image(p, &img))?;
        manifest.artifact(&name);
    }
    run.write_manifest(&manifest)?;
    run.commit();
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let mut file = match &args.config {
        Some(path) => ConfigMap::load(path)?,
        None => ConfigMap::empty(),
    };
    let flags = TrainOverrides {
        alpha: args.alpha,
        lr: args.lr,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
        calib_trainable: args.calibrate,
        filter: args.filter.clone(),
        log_every: args.log_every,
    };
    let config = resolve_train_config(&mut file, &flags)?;
    file.finish()?;

    let paths = list_inputs(&args.input, "sino", "sin")?;
    let sinos = load_sinograms(&paths)?;

    let mut run = RunDir::create(&args.out)?;
    let mut manifest = Manifest::new("train");
    manifest.set("in", args.input.display());
    manifest.set("slices", sinos.len());
    echo_train_config(&mut manifest, &config);
    run.write_manifest(&manifest)?;

    let outcome = train(&sinos, &config)?;
    let recons = reconstruct(&sinos, &outcome.model).map_err(|e| data(e.to_string()))?;

    for (i, img) in recons.iter().enumerate() {
        let name = format!("recon_{i:03}.img");
        run.save_with(&name, |p| save_image(p, img))?;
        manifest.artifact(&name);
    }
    run.write_bytes("trace.csv", outcome.trace.to_csv().as_bytes())?;
    manifest.artifact("trace.csv");
    if config.calib_trainable {
        let model = &outcome.model;
        let gains = &model.store.get(model.calibration.w).values;
        let offsets = &model.store.get(model.calibration.b).values;
        let mut text = String::from("gain,offset\n");
        for (w, b) in gains.iter().zip(offsets) {
            text.push_str(&format!("{w},{b}\n"));
        }
        run.write_bytes("calibration.csv", text.as_bytes())?;
        manifest.artifact("calibration.csv");
    }
    for note in &outcome.trace.notes {
        eprintln!("note: {note}");
    }
    run.write_manifest(&manifest)?;
    run.commit();
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let mode = SensorCondition::parse(&args.mode)
        .ok_or_else(|| usage(format!("--mode: unknown mode {:?} (uniform|nonuniform)", args.mode)))?;
    let recon_paths = list_inputs(&args.recon, "recon", "img")?;
    let truth_paths = list_inputs(&args.truth, "truth", "img")?;
    if recon_paths.len() != truth_paths.len() {
        return Err(data(format!(
            "{} reconstructions but {} ground-truth images",
            recon_paths.len(),
            truth_paths.len()
        )));
    }
    let recons = load_images(&recon_paths)?;
    let truths = load_images(&truth_paths)?;

    let mut psnrs = Vec::new();
    let mut corrs = Vec::new();
    for (i, (truth, recon)) in truths.iter().zip(&recons).enumerate() {
        let slice_err = |e: sparseproj::metrics::MetricError| {
            data(format!("{}: {e}", recon_paths[i].display()))
        };
        corrs.push(pearson_corr(truth, recon).map_err(slice_err)?);
        if mode == SensorCondition::Uniform {
            psnrs.push(psnr(truth, recon, MAX_VALUE).map_err(slice_err)?);
        }
    }

    let mut csv = String::from("slice,psnr,corr\n");
    let psnr_cell = |i: usize| {
        if mode == SensorCondition::Uniform { fmt_f64(psnrs[i]) } else { String::new() }
    };
    for i in 0..corrs.len() {
        csv.push_str(&format!("{i},{},{}\n", psnr_cell(i), fmt_f64(corrs[i])));
    }
    let agg = |values: &[f64], f: &dyn Fn(&[f64]) -> f64| {
        if mode == SensorCondition::Uniform { fmt_f64(f(values)) } else { String::new() }
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let std = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
    };
    csv.push_str(&format!("mean,{},{}\n", agg(&psnrs, &mean), fmt_f64(mean(&corrs))));
    csv.push_str(&format!("std,{},{}\n", agg(&psnrs, &std), fmt_f64(std(&corrs))));

    let mut run = RunDir::create(&args.out)?;
    let mut manifest = Manifest::new("eval");
    manifest.set("recon", args.recon.display());
    manifest.set("truth", args.truth.display());
    manifest.set("mode", mode.name());
    manifest.set("slices", recons.len());
    run.write_manifest(&manifest)?;
    run.write_bytes("metrics.csv", csv.as_bytes())?;
    manifest.artifact("metrics.csv");
    run.write_manifest(&manifest)?;
    run.commit();
    Ok(())
}

pub fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let mut file = ConfigMap::load(&args.grid_config)?;
    let train_config = resolve_train_config(&mut file, &TrainOverrides::default())?;

    let kind = file
        .take_with("phantom", PhantomKind::parse)?
        .unwrap_or(PhantomKind::RandomEllipses);
    let side = file.take("side")?.unwrap_or(64usize);
    let slices = file.take("slices")?.unwrap_or(16usize);
    let volumes = file.take("volumes")?.unwrap_or(1usize);
    let drift = file.take("drift")?.unwrap_or(1.0f64);
    let angle_counts = file
        .take_list("angle_counts", |s| s.parse::<usize>().ok())?
        .unwrap_or_else(|| vec![2, 4, 8, 16]);
    let conditions = file
        .take_list("conditions", SensorCondition::parse)?
        .unwrap_or_else(|| vec![SensorCondition::Uniform, SensorCondition::NonUniform]);
    let sensor_mode = file.take_with("sensor_mode", SensorMode::parse)?.unwrap_or(SensorMode::Safe);
    let jobs_file = file.take("jobs")?;
    let panels = file.take("panels")?.unwrap_or(false);
    file.finish()?;

    if side < 16 {
        return Err(usage(format!("side must be at least 16, got {side}")));
    }
    if slices == 0 || volumes == 0 {
        return Err(usage("slices and volumes must be at least 1"));
    }
    if angle_counts.is_empty() || angle_counts.contains(&0) {
        return Err(usage("angle_counts needs at least one positive entry"));
    }
    if conditions.is_empty() {
        return Err(usage("conditions needs at least one entry"));
    }
    let jobs = args.jobs.or(jobs_file).unwrap_or(1).max(1);

    let grid = GridConfig {
        train: train_config,
        angle_counts: angle_counts.clone(),
        conditions: conditions.clone(),
        sensor_mode,
        jobs,
        keep_sample_recon: panels,
    };

    let volume_list: Vec<ExperimentVolume> = (0..volumes)
        .map(|v| {
            let spec = PhantomSpec {
                kind,
                side,
                n_slices: slices,
                seed: derive_seed(grid.train.seed, VOLUME_SEED_SALT + v as u64),
                drift,
            };
            ExperimentVolume { id: format!("v{v}"), slices: make_phantom_volume(&spec) }
        })
        .collect();

    let mut run = RunDir::create(&args.out)?;
    let mut manifest = Manifest::new("compare");
    manifest.set("grid_config", args.grid_config.display());
    manifest.set("phantom", kind.name());
    manifest.set("side", side);
    manifest.set("slices", slices);
    manifest.set("volumes", volumes);
    manifest.set("drift", drift);
    manifest.set(
        "angle_counts",
        angle_counts.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","),
    );
    manifest.set(
        "conditions",
        conditions.iter().map(|c| c.name()).collect::<Vec<_>>().join(","),
    );
    manifest.set("sensor_mode", sensor_mode.name());
    manifest.set("jobs", jobs);
    manifest.set("panels", panels);
    echo_train_config(&mut manifest, &grid.train);
    run.write_manifest(&manifest)?;

    let outcome = run_experiment_grid(&volume_list, &grid);

    if outcome.records.is_empty() {
        let mut msg = String::from("every grid cell failed:");
        for f in &outcome.failures {
            msg.push_str(&format!("\n  {f}"));
        }
        return Err(data(msg));
    }

    run.write_bytes("results.csv", records_to_csv(&outcome.records).as_bytes())?;
    manifest.artifact("results.csv");

    let mut failures = String::new();
    for f in &outcome.failures {
        failures.push_str(&format!("{f}\n"));
        eprintln!("warning: {f}");
    }
    run.write_bytes("failures.txt", failures.as_bytes())?;
    manifest.artifact("failures.txt");

    if panels {
        for (vol_idx, volume) in volume_list.iter().enumerate() {
            for &n in &angle_counts {
                for &condition in &conditions {
                    let pick = |method: Method| {
                        outcome.records.iter().find(|r| {
                            r.volume_id == volume.id
                                && r.method == method
                                && r.n_angles == n
                                && r.condition == condition
                        })
                    };
                    let (ours, fbp) = (pick(Method::Ours), pick(Method::Fbp));
                    let (Some(ours), Some(fbp)) = (ours, fbp) else { continue };
                    let (Some(a), Some(b)) = (&ours.sample_recon, &fbp.sample_recon) else {
                        continue;
                    };
                    let truth = &volume_list[vol_idx].slices[0];
                    let name = format!("panel_{}_n{:02}_{}.pgm", volume.id, n, condition.name());
                    run.write_bytes(&name, &panel_pgm(&[a, b, truth]))?;
                    manifest.artifact(&name);
                }
            }
        }
    }

    run.write_manifest(&manifest)?;
    run.commit();
    Ok(())
}

/// Renders images side by side (ours | fbp | truth) as one 16-bit PGM,
/// jointly normalized so gray levels are comparable across the panes.
fn panel_pgm(images: &[&Image]) -> Vec<u8> {
    const GAP: usize = 2;
    let side = images[0].side();
    let width = side * images.len() + GAP * (images.len() - 1);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for img in images {
        for v in img.as_slice() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{width} {side}\n65535\n").into_bytes();
    for row in 0..side {
        for (k, img) in images.iter().enumerate() {
            if k > 0 {
                out.extend(std::iter::repeat(0u8).take(2 * GAP));
            }
            for col in 0..side {
                let v = ((img.get(row, col) - lo) / span * 65535.0).round() as u16;
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
    }
    out
}
