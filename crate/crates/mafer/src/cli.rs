//! Command-line interface: dataset synthesis, class-weight tables,
//! training, evaluation sweeps, retrieval, feature export, and k-fold runs.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
//! error. Failures print a one-line JSON object to stderr.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{self, AppConfig, DatasetRef};
use crate::data::ClassWeights;
use crate::error::{Error, Result};
use crate::eval::{
    average_accuracy, confusion, extract_features_at, features_to_csv, overall_accuracy,
    predict_at, run_cbir,
};
use crate::imageops::pnm;
use crate::nn::load_checkpoint;
use crate::train::{kfold_evaluate, run_training};

#[derive(Debug, Parser)]
#[command(name = "mafer", version, about = "Multi-resolution classifier toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted-key override, e.g. --set run.seed=3 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Master seed; overrides every seed field in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for generated files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker thread count (accepted for interface stability; execution
    /// is currently single-threaded).
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

impl CommonArgs {
    fn app_config(&self) -> Result<AppConfig> {
        let mut cfg: AppConfig = config::resolve(self.config.as_deref(), &self.set)?;
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
            cfg.cbir.seed = seed;
            if let DatasetRef::Synthetic { spec } = &mut cfg.dataset {
                spec.seed = seed;
            }
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| {
            Error::Config("this command writes files; pass --out <dir>".into())
        })
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic glyph dataset as pixmap files plus a manifest.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compute per-class loss weights from a `class,count` CSV.
    Weights {
        #[command(flatten)]
        common: CommonArgs,
        /// CSV file with `class,count` rows (header optional).
        counts: PathBuf,
    },
    /// Train a model and write checkpoints, a report, and a progress log.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate a checkpoint across a resolution sweep.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        checkpoint: PathBuf,
        /// Comma-separated shortest sides, e.g. `16,24,32,native`.
        #[arg(long, default_value = "native")]
        resolutions: String,
    },
    /// Run the retrieval protocol against a checkpoint's embeddings.
    Cbir {
        #[command(flatten)]
        common: CommonArgs,
        checkpoint: PathBuf,
    },
    /// Export embedding vectors for every sample as CSV.
    Extract {
        #[command(flatten)]
        common: CommonArgs,
        checkpoint: PathBuf,
        /// Degrade inputs to this shortest side before extraction.
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// k-fold cross-validation (subject-disjoint when subject ids exist).
    Kfold {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
}

/// 64-bit FNV-1a, used for manifest checksums.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_synth(common: &CommonArgs) -> Result<()> {
    let cfg = common.app_config()?;
    let spec = match &cfg.dataset {
        DatasetRef::Synthetic { spec } => spec.clone(),
        _ => {
            return Err(Error::Config(
                "synth requires a synthetic dataset configuration".into(),
            ))
        }
    };
    let out = common.out_dir()?;
    let ds = cfg.dataset.load()?;
    let mut files = Vec::new();
    for i in 0..ds.len() {
        let class = ds.label(i);
        let name = &ds.class_names[class];
        let dir = out.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let index = i % spec.samples_per_class;
        let path = dir.join(format!("{index:04}.pgm"));
        let img = ds.image(i)?;
        let bytes = pnm::encode(&img);
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        files.push(json!({
            "path": format!("{name}/{index:04}.pgm"),
            "class": name,
            "class_id": class,
            "index": index,
            "fnv1a64": format!("{:016x}", fnv1a64(&bytes)),
        }));
    }
    let manifest = json!({
        "spec": spec,
        "class_names": ds.class_names,
        "files": files,
    });
    let mpath = out.join("manifest.json");
    write_text(&mpath, &serde_json::to_string_pretty(&manifest).unwrap())?;
    println!(
        "{}",
        json!({"samples": ds.len(), "manifest": mpath})
    );
    Ok(())
}

fn cmd_weights(common: &CommonArgs, counts_path: &Path) -> Result<()> {
    let text =
        std::fs::read_to_string(counts_path).map_err(|e| Error::io(counts_path, e))?;
    let mut names = Vec::new();
    let mut counts = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.eq_ignore_ascii_case("class,count")) {
            continue;
        }
        let (name, count) = line.split_once(',').ok_or_else(|| Error::Parse {
            path: counts_path.to_path_buf(),
            row: lineno + 1,
            message: "expected `class,count`".into(),
        })?;
        let count: usize = count.trim().parse().map_err(|_| Error::Parse {
            path: counts_path.to_path_buf(),
            row: lineno + 1,
            message: format!("invalid count `{}`", count.trim()),
        })?;
        names.push(name.trim().to_string());
        counts.push(count);
    }
    let weights = ClassWeights::from_counts(&counts)?;
    if weights.is_degenerate() {
        eprintln!("warning: single-class input; loss weight fixed at 1.000");
    }
    let lw = weights.loss_weights();
    let mut csv = String::from("class,count,weight\n");
    for i in 0..names.len() {
        csv.push_str(&format!("{},{},{:.3}\n", names[i], counts[i], lw[i]));
    }
    print!("{csv}");
    if let Some(out) = &common.out {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_text(&out.join("weights.csv"), &csv)?;
    }
    Ok(())
}

fn cmd_train(common: &CommonArgs) -> Result<()> {
    let cfg = common.app_config()?;
    let ds = cfg.dataset.load()?;
    let out = common.out.as_deref();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let (_, report) = run_training(&ds, &cfg.run, out)?;
    print!("{}", report.history_csv());
    if let Some(dir) = out {
        write_text(
            &dir.join("run_report.json"),
            &serde_json::to_string_pretty(&report).unwrap(),
        )?;
        write_text(&dir.join("progress.csv"), &report.history_csv())?;
    }
    println!(
        "{}",
        json!({
            "final_val_accuracy": report.final_val_accuracy,
            "checkpoints": report.checkpoints,
            "logged_rows": report.history.len(),
        })
    );
    Ok(())
}

/// Parse `16,24,32,native` into concrete degradation targets.
fn parse_resolutions(s: &str) -> Result<Vec<Option<usize>>> {
    s.split(',')
        .map(|tok| {
            let tok = tok.trim();
            if tok.eq_ignore_ascii_case("native") {
                Ok(None)
            } else {
                tok.parse::<usize>().map(Some).map_err(|_| {
                    Error::Config(format!(
                        "resolution `{tok}` must be a positive integer or `native`"
                    ))
                })
            }
        })
        .collect()
}

fn cmd_eval(common: &CommonArgs, checkpoint: &Path, resolutions: &str) -> Result<()> {
    let cfg = common.app_config()?;
    let ds = cfg.dataset.load()?;
    let (model, _) = load_checkpoint(checkpoint)?;
    let aug = cfg.run.augment.clone();
    let labels = ds.labels();
    let mut entries = Vec::new();
    for degrade in parse_resolutions(resolutions)? {
        let preds = predict_at(&model, &ds, cfg.run.batch_size, &aug, degrade)?;
        let overall = overall_accuracy(&preds, &labels)?;
        let avg = average_accuracy(&preds, &labels, ds.num_classes()).ok();
        let cm = confusion(&preds, &labels, &ds.class_names)?;
        let tag = degrade.map_or("native".to_string(), |r| r.to_string());
        if let Some(dir) = &common.out {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            write_text(&dir.join(format!("confusion_{tag}.csv")), &cm.to_csv())?;
        }
        entries.push(json!({
            "resolution": tag,
            "overall_accuracy": overall,
            "average_accuracy": avg.map(|(m, _)| m),
            "average_accuracy_sd": avg.map(|(_, s)| s),
        }));
    }
    let doc = json!({ "results": entries });
    if let Some(dir) = &common.out {
        write_text(
            &dir.join("metrics.json"),
            &serde_json::to_string_pretty(&doc).unwrap(),
        )?;
    }
    println!("{doc}");
    Ok(())
}

fn cmd_cbir(common: &CommonArgs, checkpoint: &Path) -> Result<()> {
    let cfg = common.app_config()?;
    let ds = cfg.dataset.load()?;
    let (model, _) = load_checkpoint(checkpoint)?;
    let report = run_cbir(&model, &ds, cfg.run.batch_size, &cfg.run.augment, &cfg.cbir)?;
    let doc = serde_json::to_string_pretty(&report).unwrap();
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_text(&dir.join("cbir.json"), &doc)?;
    }
    println!("{doc}");
    Ok(())
}

fn cmd_extract(
    common: &CommonArgs,
    checkpoint: &Path,
    resolution: Option<usize>,
) -> Result<()> {
    let cfg = common.app_config()?;
    let ds = cfg.dataset.load()?;
    let (model, _) = load_checkpoint(checkpoint)?;
    let (features, labels) =
        extract_features_at(&model, &ds, cfg.run.batch_size, &cfg.run.augment, resolution)?;
    let csv = features_to_csv(&features, &labels);
    match &common.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            write_text(&dir.join("features.csv"), &csv)?;
            println!(
                "{}",
                json!({"samples": features.len(), "dim": features.first().map(|f| f.len())})
            );
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_kfold(common: &CommonArgs, k: usize) -> Result<()> {
    let cfg = common.app_config()?;
    let ds = cfg.dataset.load()?;
    let report = kfold_evaluate(&ds, k, &cfg.run)?;
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_text(
            &dir.join("kfold.json"),
            &serde_json::to_string_pretty(&report).unwrap(),
        )?;
    }
    println!("{}", serde_json::to_string(&report).unwrap());
    println!("{}", report.summary_line());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { common } => cmd_synth(common),
        Command::Weights { common, counts } => cmd_weights(common, counts),
        Command::Train { common } => cmd_train(common),
        Command::Eval {
            common,
            checkpoint,
            resolutions,
        } => cmd_eval(common, checkpoint, resolutions),
        Command::Cbir { common, checkpoint } => cmd_cbir(common, checkpoint),
        Command::Extract {
            common,
            checkpoint,
            resolution,
        } => cmd_extract(common, checkpoint, *resolution),
        Command::Kfold { common, k } => cmd_kfold(common, *k),
    }
}

/// Usage and configuration problems exit 2; runtime failures exit 1.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        _ => 1,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Config(_) => "config",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::Shape(_) => "shape",
        Error::NonFinite(_) => "non_finite",
        Error::BackwardConsumed => "backward_consumed",
        Error::Parse { .. } => "parse",
        Error::NotACheckpoint => "not_a_checkpoint",
        Error::CheckpointVersion { .. } => "checkpoint_version",
        Error::CheckpointTruncated(_) => "checkpoint_truncated",
        Error::CheckpointShape { .. } => "checkpoint_shape",
        Error::Dataset(_) => "dataset",
        Error::Io { .. } => "io",
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints --help/--version to stdout with exit 0
            let code = if e.exit_code() == 0 { 0 } else { 2 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!(
                "{}",
                json!({"error": {"kind": error_kind(&e), "message": e.to_string()}})
            );
            exit_code(&e)
        }
    }
}
