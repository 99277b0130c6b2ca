//! `mamba-va` command line: train, evaluate, predict, gen-synthetic,
//! grad-check and bench-scan.

mod config;

pub use config::{
    is_known_key, load_config, load_id_list, parse_config, parse_overrides, seed_or_env,
    RunConfig, DATA_KEYS,
};

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::data::{
    generate_synthetic_dataset, kfold_split, load_features, Dataset, Fold, SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::gradcheck;
use crate::metrics::{fold_report, FoldTable};
use crate::scan::{bench_scan, BenchRow, BenchSweep};
use crate::training::{
    evaluate_videos, fit_from, predict_sequence, TrainConfig, Trainer, TRAIN_LOG_HEADER,
};

#[derive(Debug, Parser)]
#[command(name = "mamba-va", version, about = "Valence/arousal regression with a TCN + Mamba stack")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on one fold and write checkpoint, log and report to the run directory.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset (or one fold of it).
    Evaluate(EvaluateArgs),
    /// Write per-frame predictions for one feature file as CSV.
    Predict(PredictArgs),
    /// Write the seeded synthetic corpus.
    GenSynthetic(GenArgs),
    /// Compare every analytical gradient with finite differences.
    GradCheck(GradCheckArgs),
    /// Time the sequential and parallel scans.
    BenchScan(BenchArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Run directory (overrides `out_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from a `state.mva` written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Configuration with data paths and fold settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    #[arg(long)]
    pub features_dir: Option<PathBuf>,
    #[arg(long)]
    pub annotations_dir: Option<PathBuf>,
    /// Evaluate the validation videos of this fold instead of every video.
    #[arg(long)]
    pub fold: Option<usize>,
    /// Directory for report.csv / report.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Feature file (`.fvec`).
    #[arg(long)]
    pub features: PathBuf,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 20)]
    pub videos: usize,
    #[arg(long, default_value_t = 400)]
    pub min_frames: usize,
    #[arg(long, default_value_t = 600)]
    pub max_frames: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// `full`, `ops`, or a comma-separated list of check names.
    #[arg(long, default_value = "full")]
    pub scope: String,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [256, 1024, 4096])]
    pub lengths: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [4, 64, 256])]
    pub channels: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [8])]
    pub states: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Exit status: 0 success, 1 failed check or runtime error, 2 bad input
/// (configuration, files, formats).
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Io { .. }
        | Error::Format { .. }
        | Error::Parse { .. }
        | Error::CheckpointShape { .. }
        | Error::MissingTensor(_) => 2,
        _ => 1,
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn run(command: Command) -> Result<u8> {
    match command {
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::GenSynthetic(a) => cmd_gen_synthetic(&a),
        Command::GradCheck(a) => cmd_grad_check(&a),
        Command::BenchScan(a) => cmd_bench_scan(&a),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn folds_for(cfg: &RunConfig, dataset: &Dataset) -> Result<Vec<Fold>> {
    let official = match (&cfg.official_train, &cfg.official_val) {
        (Some(t), Some(v)) => Some((load_id_list(t)?, load_id_list(v)?)),
        _ => None,
    };
    kfold_split(
        &dataset.ids(),
        cfg.folds,
        cfg.train.seed,
        official.as_ref().map(|(t, v)| (t.as_slice(), v.as_slice())),
    )
}

fn train_pairs(a: &TrainArgs) -> Result<BTreeMap<String, String>> {
    let mut pairs = match &a.config {
        Some(p) => load_config(p)?,
        None => BTreeMap::new(),
    };
    pairs.extend(parse_overrides(&a.sets)?);
    let flags = [
        ("fold", a.fold.map(|v| v.to_string())),
        ("epochs", a.epochs.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("workers", a.workers.map(|v| v.to_string())),
        ("out_dir", a.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            pairs.insert(k.into(), v);
        }
    }
    // A short `--epochs` run keeps the warmup shorter than the run.
    if let Some(e) = a.epochs {
        let warmup = pairs
            .get("warmup_epochs")
            .map_or(Ok(TrainConfig::default().warmup_epochs), |v| v.parse())
            .map_err(|_| Error::Config("invalid value for `warmup_epochs`".into()))?;
        if e > 0 && warmup >= e {
            log::warn!("--epochs {e} is not longer than the warmup; warmup_epochs set to {}", e - 1);
            pairs.insert("warmup_epochs".into(), (e - 1).to_string());
        }
    }
    Ok(pairs)
}

fn report_files(dir: &Path, table: &FoldTable) -> Result<()> {
    write(&dir.join("report.csv"), &table.to_csv())?;
    write(&dir.join("report.txt"), &table.to_text())
}

fn cmd_train(a: &TrainArgs) -> Result<u8> {
    let pairs = train_pairs(a)?;
    let mut cfg = RunConfig::from_pairs(&pairs)?;
    let dataset = Dataset::load(&cfg.features_dir, &cfg.annotations_dir)?;
    let dim = dataset
        .feature_dim()
        .ok_or_else(|| Error::Config("dataset has no videos".into()))?;
    if !cfg.in_dim_explicit {
        cfg.model.tcn.in_dim = dim;
    }
    if cfg.model.tcn.in_dim != dim {
        return Err(Error::Config(format!(
            "in_dim = {} but features have {dim} columns",
            cfg.model.tcn.in_dim
        )));
    }
    cfg.model.validate()?;
    let folds = folds_for(&cfg, &dataset)?;
    let fold = folds
        .get(cfg.fold)
        .ok_or_else(|| Error::Config(format!("fold {} does not exist", cfg.fold)))?;

    let out = cfg.out_dir.clone();
    create_dir(&out)?;
    write(&out.join("config.resolved"), &cfg.to_text())?;

    let trainer = match &a.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let overrides: BTreeMap<String, String> = cfg.train.to_pairs().into_iter().collect();
            let t = Trainer::from_state_checkpoint(&ck, &overrides)?;
            if t.model.config != cfg.model {
                return Err(Error::Config(format!(
                    "{} was trained with a different model configuration",
                    path.display()
                )));
            }
            t
        }
        None => Trainer::new(cfg.model.clone(), cfg.train.clone())?,
    };

    let log_path = out.join("train_log.csv");
    let fresh = a.resume.is_none() || !log_path.exists();
    let mut log_file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    if fresh {
        writeln!(log_file, "{TRAIN_LOG_HEADER}").map_err(|e| Error::io(&log_path, e))?;
    }
    let mut log_err = None;
    let result = fit_from(trainer, &dataset, fold, |entry| {
        if let Err(e) = writeln!(log_file, "{}", entry.to_csv()) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(Error::io(&log_path, e));
    }

    let mut best = Checkpoint::from_model(&result.best);
    best.config.insert("window".into(), cfg.train.window.to_string());
    best.config.insert("stride".into(), cfg.train.stride.to_string());
    best.save(out.join("checkpoint.mva"))?;
    result.trainer.state_checkpoint().save(out.join("state.mva"))?;

    let val = dataset.select(&fold.val)?;
    let report = evaluate_videos(&result.best, &val, cfg.train.window, cfg.train.stride)?;
    let table = fold_report(vec![report.row(cfg.fold.to_string())])?;
    report_files(&out, &table)?;
    print!("{}", table.to_text());
    log::info!("best epoch {} written to {}", result.best_epoch, out.display());
    Ok(0)
}

/// Window and stride stored with a checkpoint, falling back to the defaults.
fn stored_windowing(ck: &Checkpoint) -> Result<TrainConfig> {
    let mut t = TrainConfig::default();
    let keys: BTreeMap<String, String> = ck
        .config
        .iter()
        .filter(|(k, _)| *k == "window" || *k == "stride")
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    t.apply_pairs(&keys)?;
    Ok(t)
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<u8> {
    let mut pairs = match &a.config {
        Some(p) => load_config(p)?,
        None => BTreeMap::new(),
    };
    pairs.extend(parse_overrides(&a.sets)?);
    let ck = Checkpoint::load(&a.checkpoint)?;

    let mut model_cfg = ck.model_config()?;
    model_cfg.apply_pairs(&pairs)?;
    let model = ck.to_model(Some(model_cfg))?;

    let mut windowing = stored_windowing(&ck)?;
    windowing.apply_pairs(&pairs)?;
    let (window, stride) = (windowing.window, windowing.stride);

    let dir = |flag: &Option<PathBuf>, key: &str| -> Result<PathBuf> {
        flag.clone()
            .or_else(|| pairs.get(key).map(PathBuf::from))
            .ok_or_else(|| Error::Config(format!("`{key}` is required (flag or config)")))
    };
    let dataset = Dataset::load(
        &dir(&a.features_dir, "features_dir")?,
        &dir(&a.annotations_dir, "annotations_dir")?,
    )?;

    let (label, videos) = match a.fold {
        Some(f) => {
            pairs.insert("fold".into(), f.to_string());
            pairs.entry("features_dir".into()).or_insert_with(|| ".".into());
            pairs.entry("annotations_dir".into()).or_insert_with(|| ".".into());
            let cfg = RunConfig::from_pairs(&pairs)?;
            let folds = folds_for(&cfg, &dataset)?;
            (f.to_string(), dataset.select(&folds[f].val)?)
        }
        None => ("all".to_string(), dataset.videos().iter().collect()),
    };
    let report = evaluate_videos(&model, &videos, window, stride)?;
    let table = fold_report(vec![report.row(label)])?;
    if let Some(out) = &a.out {
        create_dir(out)?;
        report_files(out, &table)?;
    }
    print!("{}", table.to_text());
    Ok(0)
}

fn cmd_predict(a: &PredictArgs) -> Result<u8> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = ck.to_model(None)?;
    let mut windowing = stored_windowing(&ck)?;
    windowing.window = a.window.unwrap_or(windowing.window);
    windowing.stride = a.stride.unwrap_or(windowing.stride);
    windowing.validate()?;
    let seq = load_features(&a.features)?;
    let pred = predict_sequence(&model, &seq, windowing.window, windowing.stride)?;
    let mut csv = String::from("frame,valence,arousal\n");
    for (t, row) in pred.data().chunks(2).enumerate() {
        csv.push_str(&format!("{},{},{}\n", t + 1, row[0], row[1]));
    }
    match &a.output {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(0)
}

fn cmd_gen_synthetic(a: &GenArgs) -> Result<u8> {
    let cfg = SyntheticConfig {
        seed: seed_or_env(a.seed)?,
        n_videos: a.videos,
        min_frames: a.min_frames,
        max_frames: a.max_frames,
        dim: a.dim,
        ..SyntheticConfig::default()
    };
    let gen = generate_synthetic_dataset(&cfg, &a.out)?;
    println!("wrote {} videos to {}", cfg.n_videos, a.out.display());
    println!("coefficients_sha256={}", gen.digest());
    Ok(0)
}

fn cmd_grad_check(a: &GradCheckArgs) -> Result<u8> {
    let reports = gradcheck::run_scope(&a.scope, seed_or_env(a.seed)?)?;
    println!("{:<26} {:>14} {:>10}  worst input", "op", "max_rel_error", "tolerance");
    let mut ok = true;
    for r in &reports {
        println!(
            "{:<26} {:>14.3e} {:>10.0e}  {}  {}",
            r.op,
            r.max_rel_error,
            r.tolerance,
            r.worst_input,
            if r.passed() { "ok" } else { "FAIL" }
        );
        ok &= r.passed();
    }
    Ok(if ok { 0 } else { 1 })
}

fn cmd_bench_scan(a: &BenchArgs) -> Result<u8> {
    let sweep = BenchSweep {
        lengths: a.lengths.clone(),
        channels: a.channels.clone(),
        states: a.states.clone(),
        repeats: a.repeats,
        seed: seed_or_env(a.seed)?,
    };
    let rows = bench_scan(&sweep)?;
    let mut csv = format!("{}\n", BenchRow::CSV_HEADER);
    for r in &rows {
        csv.push_str(&r.to_csv());
        csv.push('\n');
    }
    match &a.output {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(0)
}
