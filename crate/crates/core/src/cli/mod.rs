//! `cellstream generate|train|eval|report`.

pub mod config;
pub mod plot;
pub mod report;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::curriculum::{competence_curve_csv, eligible_sizes_csv};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::synthcells::dataset::load_videos;
use crate::synthcells::{generate_dataset, DatasetManifest, Split, Video, MANIFEST_FILE};
use crate::trainer::checkpoint::{load_with_meta, save_checkpoint, CheckpointMeta};
use crate::trainer::{evaluate_all, summarize, train, Classifier, EvalMethod, RunMetrics, VideoViews, ViewSource};

pub use config::{load_config, RunConfig};

pub const SNAPSHOT_FILE: &str = "config.snapshot.toml";

#[derive(Parser, Debug)]
#[command(name = "cellstream", version, about = "Synthetic blood-cell videos, curriculum training and multi-view evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Print a JSON summary on stdout.
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the synthetic video dataset and its manifest.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Number of videos.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train one model per seed.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory written by `generate`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<u32>,
        #[arg(long)]
        curriculum: Option<Switch>,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Evaluate trained checkpoints on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Directory written by `train`.
        #[arg(long)]
        runs: PathBuf,
        /// Views per sample for the multi-view methods.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Plot training curves and the competence schedule; write summary.csv.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directories written by `train`. Repeatable.
        #[arg(long, required = true)]
        runs: Vec<PathBuf>,
    },
}

/// Result of one command: a JSON summary and a human-readable rendering.
pub struct Outcome {
    pub json: serde_json::Value,
    pub text: String,
}

fn resolve(common: &Common, extra: Vec<(String, String)>) -> Result<RunConfig> {
    let mut overrides = common
        .overrides
        .iter()
        .map(|s| config::split_override(s).map(|(k, v)| (k.to_string(), v.to_string())))
        .collect::<Result<Vec<_>>>()?;
    overrides.extend(extra);
    load_config(common.config.as_deref(), &overrides)
}

fn seeds_override(seeds: &Option<Vec<u64>>) -> Option<(String, String)> {
    seeds.as_ref().map(|s| {
        let list: Vec<String> = s.iter().map(u64::to_string).collect();
        ("seeds".to_string(), format!("[{}]", list.join(", ")))
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn load_manifest(data: &Path) -> Result<DatasetManifest> {
    let path = data.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::InvalidConfig(format!("manifest not found: {}", path.display())));
    }
    DatasetManifest::load(&path)
}

/// Views of one split.
fn split_views<'a>(
    config: &RunConfig,
    manifest: &'a DatasetManifest,
    videos: &'a [Video],
    split: Split,
) -> Result<VideoViews<'a>> {
    let entries = manifest.entries_in(split);
    VideoViews::new(videos.iter().collect(), &entries, config.task, config.clip, config.crop)
}

fn load_split(data: &Path, manifest: &DatasetManifest, split: Split) -> Result<Vec<Video>> {
    load_videos(data, &manifest.entries_in(split))
}

/// Sidecar contents for a video-trained checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: RunConfig,
    pub dataset_checksum: String,
}

pub fn checkpoint_meta(config: &RunConfig, dataset_checksum: &str, seed: u64, metrics: Option<RunMetrics>) -> CheckpointMeta {
    let record = RunRecord {
        run: config.clone(),
        dataset_checksum: dataset_checksum.to_string(),
    };
    CheckpointMeta {
        format_version: 0,
        arch: config
            .train_config()
            .arch((3 * config.clip.clip_len, config.crop.out_size, config.crop.out_size), 2)
            .expect("validated config"),
        seed,
        params_sha256: String::new(),
        config: serde_json::to_value(record).expect("record serializes"),
        metrics,
    }
}

pub fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.ckpt"))
}

pub fn metrics_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}_metrics.csv"))
}

fn cmd_generate(common: &Common, n: Option<usize>) -> Result<Outcome> {
    let extra = n.map(|n| ("generation.n_videos".to_string(), n.to_string())).into_iter().collect();
    let config = resolve(common, extra)?;
    create_dir(&common.out)?;
    let manifest = generate_dataset(&config.generation, &common.out)?;
    write(&common.out.join(SNAPSHOT_FILE), config.snapshot()?)?;
    let count = |s| manifest.entries_in(s).len();
    let checksum = manifest.checksum();
    let wbc = manifest.high_fraction(crate::synthcells::Task::Wbc);
    let rbc = manifest.high_fraction(crate::synthcells::Task::Rbc);
    let json = json!({
        "command": "generate",
        "manifest": common.out.join(MANIFEST_FILE),
        "n_videos": manifest.entries.len(),
        "splits": {"train": count(Split::Train), "val": count(Split::Val), "test": count(Split::Test)},
        "wbc_high_fraction": wbc,
        "rbc_high_fraction": rbc,
        "checksum": checksum,
    });
    let text = format!(
        "generated {} videos (train {}, val {}, test {})\nWBC high fraction {wbc:.3}, RBC high fraction {rbc:.3}\nchecksum {checksum}\n",
        manifest.entries.len(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test)
    );
    Ok(Outcome { json, text })
}

fn cmd_train(common: &Common, data: &Path, epochs: Option<u32>, curriculum: Option<Switch>, seeds: &Option<Vec<u64>>) -> Result<Outcome> {
    let mut extra = Vec::new();
    if let Some(e) = epochs {
        extra.push(("train.epochs".to_string(), e.to_string()));
    }
    if let Some(c) = curriculum {
        extra.push(("curriculum.enabled".to_string(), (c == Switch::On).to_string()));
    }
    extra.extend(seeds_override(seeds));
    let mut config = resolve(common, extra)?;
    let manifest = load_manifest(data)?;
    config.generation = manifest.config.clone();
    if config.clip.clip_len > manifest.config.n_frames {
        return Err(Error::InvalidConfig(format!(
            "clip_len {} exceeds the dataset's {} frames",
            config.clip.clip_len, manifest.config.n_frames
        )));
    }
    let train_videos = load_split(data, &manifest, Split::Train)?;
    let val_videos = load_split(data, &manifest, Split::Val)?;
    let train_src = split_views(&config, &manifest, &train_videos, Split::Train)?;
    let val_src = split_views(&config, &manifest, &val_videos, Split::Val)?;
    if train_src.is_empty() {
        return Err(Error::InvalidConfig("training split is empty".into()));
    }
    let val = (!val_src.is_empty()).then_some(&val_src);
    let train_cfg = config.train_config();
    let checksum = manifest.checksum();

    create_dir(&common.out)?;
    write(&common.out.join(SNAPSHOT_FILE), config.snapshot()?)?;
    if let Some(c) = &train_cfg.curriculum {
        write(&common.out.join("competence.csv"), competence_curve_csv(c, c.total_epochs))?;
    }
    let runs = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let (model, metrics) = train(&train_cfg, seed, &train_src, val)?;
            save_checkpoint(
                &checkpoint_path(&common.out, seed),
                &model,
                checkpoint_meta(&config, &checksum, seed, Some(metrics.clone())),
            )?;
            write(&metrics_path(&common.out, seed), metrics.to_csv())?;
            if train_cfg.curriculum.is_some() {
                write(
                    &common.out.join(format!("seed_{seed}_eligible.csv")),
                    eligible_sizes_csv(&metrics.eligible_sizes()),
                )?;
            }
            Ok(metrics)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut text = String::new();
    let mut per_seed = Vec::new();
    for m in &runs {
        let best = m.best_epoch.map(|b| &m.epochs[b as usize]);
        let last = m.epochs.last().expect("at least one epoch");
        text.push_str(&format!(
            "seed {}: {} epochs, final train loss {:.4}, best val loss {} at epoch {}\n",
            m.seed,
            m.epochs.len(),
            last.train_loss,
            m.best_val_loss.map_or("-".into(), |v| format!("{v:.4}")),
            m.best_epoch.map_or("-".into(), |v| v.to_string()),
        ));
        per_seed.push(json!({
            "seed": m.seed,
            "checkpoint": format!("seed_{}.ckpt", m.seed),
            "epochs": m.epochs.len(),
            "final_train_loss": last.train_loss,
            "best_epoch": m.best_epoch,
            "best_val_loss": m.best_val_loss,
            "best_val_acc": best.and_then(|e| e.val_acc),
            "eligible": m.eligible_sizes().iter().map(|e| e.1).collect::<Vec<_>>(),
        }));
    }
    let json = json!({"command": "train", "runs": per_seed});
    write(&common.out.join("train_summary.json"), serde_json::to_string_pretty(&json).expect("json") + "\n")?;
    Ok(Outcome { json, text })
}

/// Reject checkpoints whose training setup differs from the evaluation config.
fn check_compatible(path: &Path, meta: &CheckpointMeta, config: &RunConfig, checksum: &str) -> Result<()> {
    let record: RunRecord = serde_json::from_value(meta.config.clone()).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mismatch = |what: &str| {
        Err(Error::InvalidConfig(format!(
            "{}: checkpoint {what} does not match the configuration",
            path.display()
        )))
    };
    if record.run.task != config.task {
        return mismatch("task");
    }
    if record.run.clip != config.clip {
        return mismatch("clip length");
    }
    if record.run.crop != config.crop {
        return mismatch("crop settings");
    }
    let expected = checkpoint_meta(config, checksum, meta.seed, None).arch;
    if meta.arch != expected {
        return mismatch("architecture");
    }
    if record.dataset_checksum != checksum {
        return mismatch("dataset checksum");
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
struct SeedResult {
    seed: u64,
    baseline: f64,
    mvm: f64,
    mvwcos: f64,
}

fn cmd_eval(common: &Common, data: &Path, runs: &Path, m: Option<usize>, seeds: &Option<Vec<u64>>) -> Result<Outcome> {
    let mut extra: Vec<(String, String)> = m.map(|m| ("eval.m".to_string(), m.to_string())).into_iter().collect();
    extra.extend(seeds_override(seeds));
    let mut config = resolve(common, extra)?;
    let manifest = load_manifest(data)?;
    config.generation = manifest.config.clone();
    let checksum = manifest.checksum();
    let mut models: Vec<(u64, Classifier<f32>)> = Vec::new();
    for &seed in &config.seeds {
        let path = checkpoint_path(runs, seed);
        if !path.is_file() {
            return Err(Error::InvalidConfig(format!("no checkpoint for seed {seed}: {}", path.display())));
        }
        let (model, meta) = load_with_meta(&path)?;
        check_compatible(&path, &meta, &config, &checksum)?;
        models.push((seed, model));
    }
    let test_videos = load_split(data, &manifest, Split::Test)?;
    let test_src = split_views(&config, &manifest, &test_videos, Split::Test)?;
    if test_src.is_empty() {
        return Err(Error::InvalidConfig("test split is empty".into()));
    }
    let reports = models
        .par_iter()
        .map(|(seed, model)| Ok((*seed, evaluate_all(model, &test_src, config.eval.m, derive_seed(config.eval.seed, *seed))?)))
        .collect::<Result<Vec<_>>>()?;

    create_dir(&common.out)?;
    let mut csv = String::from("seed,baseline,mvm,mvwcos\n");
    let mut results = Vec::new();
    for (seed, r) in &reports {
        csv.push_str(&format!("{seed},{},{},{}\n", r.baseline, r.mvm, r.mvwcos));
        results.push(SeedResult {
            seed: *seed,
            baseline: r.baseline,
            mvm: r.mvm,
            mvwcos: r.mvwcos,
        });
        if config.eval.traces {
            write(&common.out.join(format!("traces_seed_{seed}.jsonl")), r.traces_jsonl())?;
        }
    }
    write(&common.out.join("eval.csv"), csv)?;

    let mut summary = serde_json::Map::new();
    let mut text = format!(
        "test samples {}, m = {}, seeds {:?}\n",
        test_src.len(),
        config.eval.m,
        config.seeds
    );
    for method in EvalMethod::ALL {
        let acc: Vec<f64> = reports.iter().map(|(_, r)| r.accuracy(method)).collect();
        let s = summarize(&acc)?;
        text.push_str(&format!("{:<9} {s}\n", method.name()));
        summary.insert(
            method.name().to_string(),
            json!({"mean": s.mean, "std": s.std, "n": s.n}),
        );
    }
    let json = json!({
        "command": "eval",
        "m": config.eval.m,
        "n_test": test_src.len(),
        "per_seed": results,
        "summary": summary,
    });
    write(&common.out.join("eval_summary.json"), serde_json::to_string_pretty(&json).expect("json") + "\n")?;
    Ok(Outcome { json, text })
}

fn cmd_report(common: &Common, runs: &[PathBuf]) -> Result<Outcome> {
    let config = resolve(common, Vec::new())?;
    report::report(&config, runs, &common.out)
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Generate { common, n } => cmd_generate(common, *n),
        Command::Train {
            common,
            data,
            epochs,
            curriculum,
            seeds,
        } => cmd_train(common, data, *epochs, *curriculum, seeds),
        Command::Eval {
            common,
            data,
            runs,
            m,
            seeds,
        } => cmd_eval(common, data, runs, *m, seeds),
        Command::Report { common, runs } => cmd_report(common, runs),
    }
}

fn json_flag(cli: &Cli) -> bool {
    match &cli.command {
        Command::Generate { common, .. }
        | Command::Train { common, .. }
        | Command::Eval { common, .. }
        | Command::Report { common, .. } => common.json,
    }
}

/// Parse arguments, run, print, and map failures to a nonzero exit code.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let as_json = json_flag(&cli);
    match run(cli) {
        Ok(out) => {
            if as_json {
                println!("{}", serde_json::to_string_pretty(&out.json).expect("json"));
            } else {
                print!("{}", out.text);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
