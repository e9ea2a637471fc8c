//! Operator entry points behind the `era` binary: synthetic data generation,
//! split generation, per-fold training, key-shot evaluation, and score
//! plotting. Every command writes its outputs under `--out` together with a
//! `manifest.json` recording inputs, digests, effective configuration, and
//! artifact paths, so a run can be reproduced from the manifest alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::file_digest;
use crate::config::RunConfig;
use crate::dataset::container::{load_dataset, save_dataset};
use crate::dataset::splits::{generate_splits, load_splits, save_splits};
use crate::dataset::synthetic::{generate_synthetic_with, SynthOptions};
use crate::dataset::{FrameDetections, SplitMode, SplitSet, VideoRecord};
use crate::error::{EraError, Result};
use crate::evaluation::{
    build_report, evaluate_split, evaluate_video, expand_scores, machine_frame_scores,
    random_baseline_scores, select_keyshots, EvalRow,
};
use crate::plot::ScorePlot;
use crate::training::{fit, models_from_checkpoint};

#[derive(Debug, Parser)]
#[command(
    name = "era",
    version,
    about = "Entity-relationship aware unsupervised video summarization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset container with planted key segments.
    Synth(SynthArgs),
    /// Produce cross-validation folds over a dataset's videos.
    GenerateSplits(SplitArgs),
    /// Train one model per fold with the adversarial objective.
    Train(TrainArgs),
    /// Score fold checkpoints with the key-shot F-measure protocol.
    Evaluate(EvaluateArgs),
    /// Render one video's score curve with its selected shots.
    PlotScores(PlotArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for the dataset container and manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub n_videos: usize,
    /// Minimum downsampled frame count per video.
    #[arg(long, default_value_t = 40)]
    pub t_min: usize,
    /// Maximum downsampled frame count per video.
    #[arg(long, default_value_t = 80)]
    pub t_max: usize,
    #[arg(long, default_value_t = 5)]
    pub n_users: usize,
    /// Fraction of frames carrying entity detections.
    #[arg(long, default_value_t = 0.8)]
    pub entity_rate: f64,
    #[arg(long, default_value_t = 64)]
    pub d_scene: usize,
    #[arg(long, default_value_t = 16)]
    pub d_entity: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Dataset container to split.
    #[arg(long, env = "ERA_DATA_DIR")]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, value_enum, default_value_t = SplitModeArg::NonOverlapping)]
    pub mode: SplitModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitModeArg {
    Overlapping,
    NonOverlapping,
}

impl From<SplitModeArg> for SplitMode {
    fn from(m: SplitModeArg) -> SplitMode {
        match m {
            SplitModeArg::Overlapping => SplitMode::Overlapping,
            SplitModeArg::NonOverlapping => SplitMode::NonOverlapping,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, env = "ERA_DATA_DIR")]
    pub dataset: PathBuf,
    /// Split file from `generate-splits`.
    #[arg(long)]
    pub splits: PathBuf,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set lr=1e-4` or
    /// `--set critic.m=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Overrides the training seed from the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train only this fold index instead of all folds.
    #[arg(long)]
    pub fold: Option<usize>,
    /// Previous run directory to continue from (per-fold `last.ckpt`).
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Training run directory holding `fold_<i>/best.ckpt`.
    pub run_dir: PathBuf,
    #[arg(long, env = "ERA_DATA_DIR")]
    pub dataset: PathBuf,
    #[arg(long)]
    pub splits: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Seed for the `--baseline random` scores.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Additionally evaluate a no-learning baseline through the same protocol.
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineKind>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineKind {
    /// Uniform random frame scores, seeded per video.
    Random,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Training run directory holding `fold_<i>/best.ckpt`.
    pub run_dir: PathBuf,
    #[arg(long, env = "ERA_DATA_DIR")]
    pub dataset: PathBuf,
    /// Video id to plot.
    #[arg(long)]
    pub video: String,
    /// Fold whose checkpoint scores the video.
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Written as `manifest.json` into every command's output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Digest of the effective configuration (file plus overrides).
    pub config_digest: Option<String>,
    pub dataset_digest: Option<String>,
    pub split_digest: Option<String>,
    pub seed: u64,
    /// Input file paths as given on the command line.
    pub inputs: BTreeMap<String, String>,
    /// Artifact paths relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    /// Effective values after file loading and `--set` overrides.
    pub effective_config: Option<serde_json::Value>,
}

impl RunManifest {
    fn new(command: &str, seed: u64) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            config_digest: None,
            dataset_digest: None,
            split_digest: None,
            seed,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            wall_clock_seconds: 0.0,
            effective_config: None,
        }
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn write_manifest(out_dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(manifest)? + "\n")?;
    Ok(path)
}

fn digest_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

/// Effective config resolution shared by train/evaluate/plot: file or
/// defaults, then `--seed`, then `--set` overrides (most specific last).
fn resolve_config(path: Option<&Path>, seed: Option<u64>, sets: &[String]) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    cfg.apply_overrides(sets)?;
    cfg.validate()?;
    Ok(cfg)
}

fn config_fingerprint(cfg: &RunConfig) -> Result<(String, serde_json::Value)> {
    let toml_text = cfg.to_toml_string()?;
    Ok((digest_bytes(toml_text.as_bytes()), serde_json::to_value(cfg)?))
}

pub fn cmd_synth(args: &SynthArgs) -> Result<RunManifest> {
    let started = Instant::now();
    let opts = SynthOptions {
        n_videos: args.n_videos,
        t_range: (args.t_min, args.t_max),
        n_users: args.n_users,
        entity_rate: args.entity_rate,
        seed: args.seed,
        d_scene: args.d_scene,
        d_entity: args.d_entity,
    };
    let items = generate_synthetic_with(&opts)?;
    ensure_out_dir(&args.out)?;
    let dataset_path = args.out.join("synthetic.h5");
    save_dataset(&dataset_path, &items)?;

    let mut manifest = RunManifest::new("synth", args.seed);
    manifest.dataset_digest = Some(file_digest(&dataset_path)?);
    manifest.artifacts.insert("dataset".to_string(), "synthetic.h5".to_string());
    manifest.effective_config = Some(serde_json::to_value(&opts)?);
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    write_manifest(&args.out, &manifest)?;
    Ok(manifest)
}

pub fn cmd_generate_splits(args: &SplitArgs) -> Result<RunManifest> {
    let started = Instant::now();
    let items = load_dataset(&args.dataset)?;
    let ids: Vec<String> = items.iter().map(|(r, _)| r.video_id.clone()).collect();
    let splits = generate_splits(&ids, args.folds, args.mode.into(), args.seed)?;
    ensure_out_dir(&args.out)?;
    let split_path = args.out.join("splits.json");
    save_splits(&splits, &split_path)?;

    let mut manifest = RunManifest::new("generate-splits", args.seed);
    manifest.dataset_digest = Some(file_digest(&args.dataset)?);
    manifest.split_digest = Some(file_digest(&split_path)?);
    manifest
        .inputs
        .insert("dataset".to_string(), args.dataset.display().to_string());
    manifest.artifacts.insert("splits".to_string(), "splits.json".to_string());
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    write_manifest(&args.out, &manifest)?;
    Ok(manifest)
}

/// Folds to process: one requested index (validated) or all of them.
fn requested_folds(split: &SplitSet, fold: Option<usize>) -> Result<Vec<usize>> {
    match fold {
        Some(f) if f >= split.folds.len() => Err(EraError::InvalidArgument(format!(
            "fold {f} out of range; split has {} folds",
            split.folds.len()
        ))),
        Some(f) => Ok(vec![f]),
        None => Ok((0..split.folds.len()).collect()),
    }
}

fn load_inputs(
    dataset: &Path,
    splits: &Path,
) -> Result<(Vec<(VideoRecord, FrameDetections)>, SplitSet)> {
    let items = load_dataset(dataset)?;
    let split = load_splits(splits)?;
    let known = items.iter().map(|(r, _)| r.video_id.clone()).collect();
    split.check_against_dataset(&known)?;
    Ok((items, split))
}

pub fn cmd_train(args: &TrainArgs) -> Result<RunManifest> {
    let started = Instant::now();
    let cfg = resolve_config(args.config.as_deref(), args.seed, &args.sets)?;
    let (items, split) = load_inputs(&args.dataset, &args.splits)?;
    let folds = requested_folds(&split, args.fold)?;
    ensure_out_dir(&args.out)?;

    let mut manifest = RunManifest::new("train", cfg.train.seed);
    for &f in &folds {
        let fold = &split.folds[f];
        let train_items: Vec<(VideoRecord, FrameDetections)> = items
            .iter()
            .filter(|(r, _)| fold.train_keys.contains(&r.video_id))
            .cloned()
            .collect();
        let fold_dir = args.out.join(format!("fold_{f}"));
        let resume = match &args.resume {
            Some(dir) => {
                let last = dir.join(format!("fold_{f}")).join("last.ckpt");
                if !last.is_file() {
                    return Err(EraError::InvalidArgument(format!(
                        "--resume given but `{}` does not exist",
                        last.display()
                    )));
                }
                Some(last)
            }
            None => None,
        };
        let result = fit(
            &train_items,
            &cfg.summarizer,
            &cfg.vae,
            &cfg.critic,
            &cfg.train,
            &fold_dir,
            resume.as_deref(),
        )?;
        for (name, path) in [
            ("best", &result.best_path),
            ("last", &result.last_path),
            ("log", &result.log_path),
        ] {
            let rel = path
                .strip_prefix(&args.out)
                .unwrap_or(path)
                .display()
                .to_string();
            manifest.artifacts.insert(format!("fold_{f}/{name}"), rel);
        }
        println!(
            "fold {f}: {} epochs, {} steps, best generator loss {:.6} at epoch {}",
            result.epochs_run, result.steps_run, result.best_total, result.best_epoch
        );
    }

    let (config_digest, effective) = config_fingerprint(&cfg)?;
    manifest.config_digest = Some(config_digest);
    manifest.effective_config = Some(effective);
    manifest.dataset_digest = Some(file_digest(&args.dataset)?);
    manifest.split_digest = Some(file_digest(&args.splits)?);
    manifest
        .inputs
        .insert("dataset".to_string(), args.dataset.display().to_string());
    manifest
        .inputs
        .insert("splits".to_string(), args.splits.display().to_string());
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    write_manifest(&args.out, &manifest)?;
    Ok(manifest)
}

/// Checkpoint layout produced by `cmd_train`: `fold_<i>/best.ckpt`.
fn fold_checkpoints(run_dir: &Path, split: &SplitSet) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    let mut missing = Vec::new();
    for f in 0..split.folds.len() {
        let p = run_dir.join(format!("fold_{f}")).join("best.ckpt");
        if p.is_file() {
            paths.push(p);
        } else {
            missing.push(p.display().to_string());
        }
    }
    if !missing.is_empty() {
        return Err(EraError::InvalidArgument(format!(
            "run directory `{}` lacks checkpoints for {} of {} folds: {}",
            run_dir.display(),
            missing.len(),
            split.folds.len(),
            missing.join(", ")
        )));
    }
    Ok(paths)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<RunManifest> {
    let started = Instant::now();
    let cfg = resolve_config(args.config.as_deref(), None, &args.sets)?;
    let (items, split) = load_inputs(&args.dataset, &args.splits)?;
    let checkpoints = fold_checkpoints(&args.run_dir, &split)?;
    ensure_out_dir(&args.out)?;

    let report = evaluate_split(&items, &split, &checkpoints, cfg.eval.value_mode)?;
    report.write_json(&args.out.join("report.json"))?;
    report.write_csv(&args.out.join("report.csv"))?;
    println!(
        "evaluated {} videos over {} folds: f_avg {:.4}, f_max {:.4}",
        report.rows.len(),
        split.folds.len(),
        report.overall.f_avg,
        report.overall.f_max
    );

    let mut manifest = RunManifest::new("evaluate", args.seed);
    manifest.artifacts.insert("report_json".to_string(), "report.json".to_string());
    manifest.artifacts.insert("report_csv".to_string(), "report.csv".to_string());

    if let Some(BaselineKind::Random) = args.baseline {
        let by_id: BTreeMap<&str, &(VideoRecord, FrameDetections)> =
            items.iter().map(|item| (item.0.video_id.as_str(), item)).collect();
        let mut rows = Vec::new();
        for (fold_idx, fold) in split.folds.iter().enumerate() {
            for key in &fold.test_keys {
                let (record, _) = by_id[key.as_str()];
                let scores = random_baseline_scores(record, args.seed);
                let (f_avg, f_max) = evaluate_video(record, &scores, cfg.eval.value_mode)?;
                rows.push(EvalRow {
                    video_id: record.video_id.clone(),
                    fold: fold_idx,
                    f_avg,
                    f_max,
                });
            }
        }
        let baseline = build_report(rows, &split, Vec::new(), cfg.eval.value_mode);
        baseline.write_json(&args.out.join("baseline_report.json"))?;
        baseline.write_csv(&args.out.join("baseline_report.csv"))?;
        println!(
            "random baseline (seed {}): f_avg {:.4}, f_max {:.4}",
            args.seed, baseline.overall.f_avg, baseline.overall.f_max
        );
        manifest
            .artifacts
            .insert("baseline_json".to_string(), "baseline_report.json".to_string());
        manifest
            .artifacts
            .insert("baseline_csv".to_string(), "baseline_report.csv".to_string());
    }

    let (config_digest, effective) = config_fingerprint(&cfg)?;
    manifest.config_digest = Some(config_digest);
    manifest.effective_config = Some(effective);
    manifest.dataset_digest = Some(file_digest(&args.dataset)?);
    manifest.split_digest = Some(file_digest(&args.splits)?);
    manifest
        .inputs
        .insert("dataset".to_string(), args.dataset.display().to_string());
    manifest
        .inputs
        .insert("splits".to_string(), args.splits.display().to_string());
    manifest
        .inputs
        .insert("run_dir".to_string(), args.run_dir.display().to_string());
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    write_manifest(&args.out, &manifest)?;
    Ok(manifest)
}

pub fn cmd_plot_scores(args: &PlotArgs) -> Result<RunManifest> {
    let started = Instant::now();
    let cfg = resolve_config(args.config.as_deref(), None, &args.sets)?;
    let items = load_dataset(&args.dataset)?;
    let (record, dets) = items
        .iter()
        .find(|(r, _)| r.video_id == args.video)
        .ok_or_else(|| {
            EraError::InvalidArgument(format!("unknown video id `{}`", args.video))
        })?;

    let ckpt = args.run_dir.join(format!("fold_{}", args.fold)).join("best.ckpt");
    if !ckpt.is_file() {
        return Err(EraError::InvalidArgument(format!(
            "checkpoint `{}` does not exist",
            ckpt.display()
        )));
    }
    let (models, _) = models_from_checkpoint(&ckpt)?;
    let scores = machine_frame_scores(&models, record, dets)?;
    let mask = select_keyshots(record, &scores, cfg.eval.value_mode)?;
    let ground_truth = match &record.ground_truth_scores {
        Some(gt) => Some(expand_scores(
            &ndarray::Array1::from_vec(gt.clone()),
            &record.picks,
            record.n_frames_original,
        )?),
        None => None,
    };

    let plot = ScorePlot {
        video_id: record.video_id.clone(),
        scores,
        ground_truth,
        mask,
    };
    ensure_out_dir(&args.out)?;
    let svg_name = format!("scores_{}.svg", record.video_id);
    let csv_name = format!("scores_{}.csv", record.video_id);
    std::fs::write(args.out.join(&svg_name), plot.to_svg())?;
    std::fs::write(args.out.join(&csv_name), plot.to_csv())?;

    let mut manifest = RunManifest::new("plot-scores", 0);
    let (config_digest, effective) = config_fingerprint(&cfg)?;
    manifest.config_digest = Some(config_digest);
    manifest.effective_config = Some(effective);
    manifest.dataset_digest = Some(file_digest(&args.dataset)?);
    manifest
        .inputs
        .insert("dataset".to_string(), args.dataset.display().to_string());
    manifest
        .inputs
        .insert("run_dir".to_string(), args.run_dir.display().to_string());
    manifest.artifacts.insert("svg".to_string(), svg_name);
    manifest.artifacts.insert("csv".to_string(), csv_name);
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    write_manifest(&args.out, &manifest)?;
    Ok(manifest)
}

/// Dispatch a parsed command line. The binary maps an `Err` to exit code 1.
pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(args) => cmd_synth(args)?,
        Command::GenerateSplits(args) => cmd_generate_splits(args)?,
        Command::Train(args) => cmd_train(args)?,
        Command::Evaluate(args) => cmd_evaluate(args)?,
        Command::PlotScores(args) => cmd_plot_scores(args)?,
    };
    Ok(())
}
