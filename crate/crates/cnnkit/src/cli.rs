//! Command-line interface.

use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cnnkit_core::analyze::summary_table;
use cnnkit_core::augment::ProfileName;
use cnnkit_core::image::NormalizeMode;
use cnnkit_core::nn::Arch;
use cnnkit_core::train::{TrainConfig, TrainMode};
use log::{info, warn};

use crate::dataset::{self, NEGATIVE_CLASS, POSITIVE_CLASS};
use crate::error::{Error, Result};
use crate::fit::fit;
use crate::fsutil::write_atomic;
use crate::report::{evaluate_checkpoint, EvalOptions, DEFAULT_SAMPLE_COUNT};
use crate::synth;

/// Environment variable that sets the worker thread count.
pub const THREADS_ENV: &str = "CNNKIT_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "cnnkit",
    version,
    about = "Train and evaluate small image classifiers on the CPU"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Restructure a dataset into one folder per class.
    Prepare(PrepareArgs),
    /// Split a class tree into train and validation sets.
    Split(SplitArgs),
    /// Train a model and write a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the validation split.
    Evaluate(EvaluateArgs),
    /// Print parameter counts, size and MACs of an architecture.
    Analyze(AnalyzeArgs),
    /// Print augmentation profiles as JSON.
    Profiles(ProfilesArgs),
    /// Generate the synthetic three-class dataset.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Layout {
    Classtree,
    Yolo,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "classtree")]
    pub layout: Layout,
    /// YOLO class ids that mark the positive class.
    #[arg(long, value_delimiter = ',')]
    pub positive_ids: Vec<u32>,
    /// YOLO label directory; defaults to `<input>/labels` with images in
    /// `<input>/images`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "custom")]
    pub arch: Arch,
    #[arg(long, default_value = "scratch")]
    pub mode: TrainMode,
    /// Checkpoint with the imported backbone (transfer mode).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value = "none")]
    pub profile: ProfileName,
    /// Defaults to unit for the custom network and imagenet otherwise.
    #[arg(long)]
    pub normalize: Option<NormalizeMode>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 224)]
    pub image_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the normalization recorded in the checkpoint.
    #[arg(long)]
    pub normalize: Option<NormalizeMode>,
    /// Overrides the input size recorded in the checkpoint.
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Number of validation samples listed in predictions.jsonl.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_COUNT)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub arch: Arch,
    #[arg(long, default_value_t = 2)]
    pub num_classes: usize,
    #[arg(long, default_value_t = 224)]
    pub input_size: usize,
    /// Also write the per-layer table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProfilesArgs {
    /// Print only this profile.
    #[arg(long)]
    pub name: Option<ProfileName>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 224)]
    pub size: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(a) => prepare(a),
        Command::Split(a) => {
            let manifest = dataset::build_manifest(&a.data, a.val_fraction, a.seed)?;
            dataset::write_manifest(&a.out, &manifest)?;
            info!(
                "{} classes, {} samples written to {}",
                manifest.classes.len(),
                manifest.samples.len(),
                a.out.display()
            );
            Ok(())
        }
        Command::Train(a) => train(a),
        Command::Evaluate(a) => {
            let manifest = dataset::read_manifest(&a.manifest)?;
            let opts = EvalOptions {
                normalize: a.normalize,
                image_size: a.image_size,
                batch_size: a.batch_size,
                samples: a.samples,
            };
            let report = evaluate_checkpoint(&a.checkpoint, &manifest, &a.manifest, &a.out, opts)?;
            let m = &report.metrics;
            println!(
                "accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}  (weighted, {} samples)",
                m.accuracy,
                m.weighted.precision,
                m.weighted.recall,
                m.weighted.f1,
                report.confusion.total()
            );
            Ok(())
        }
        Command::Analyze(a) => {
            let model = a.arch.build::<f32>(a.num_classes)?;
            let summary = summary_table(&model, [3, a.input_size, a.input_size])?;
            print!("{}", summary.to_text());
            if let Some(path) = a.csv {
                write_atomic(&path, summary.to_csv().as_bytes())?;
            }
            Ok(())
        }
        Command::Profiles(a) => {
            let profiles: Vec<_> = match a.name {
                Some(n) => vec![n.profile()],
                None => ProfileName::ALL.iter().map(|n| n.profile()).collect(),
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&profiles).expect("profiles serialize")
            );
            Ok(())
        }
        Command::Synth(a) => {
            if a.size < 8 || a.per_class == 0 {
                return Err(Error::Usage(
                    "--size must be at least 8 and --per-class at least 1".into(),
                ));
            }
            synth::generate(&a.out, a.per_class, a.size, a.seed)
        }
    }
}

fn prepare(a: PrepareArgs) -> Result<()> {
    if !a.input.is_dir() {
        return Err(Error::Usage(format!(
            "input directory {} does not exist",
            a.input.display()
        )));
    }
    match a.layout {
        Layout::Classtree => {
            let classes = dataset::ingest_class_tree(&a.input)?;
            for c in &classes {
                let files: Vec<PathBuf> = c.files.iter().map(|f| c.dir.join(f)).collect();
                dataset::materialize(&a.output, &c.name, &files)?;
            }
            info!(
                "{} classes written to {}",
                classes.len(),
                a.output.display()
            );
        }
        Layout::Yolo => {
            if a.positive_ids.is_empty() {
                return Err(Error::Usage("--layout yolo requires --positive-ids".into()));
            }
            let ids: BTreeSet<u32> = a.positive_ids.iter().copied().collect();
            let images = a.input.join("images");
            let labels = a.labels.clone().unwrap_or_else(|| a.input.join("labels"));
            let outcome = dataset::ingest_yolo(&images, &labels, &ids)?;
            dataset::materialize(&a.output, POSITIVE_CLASS, &outcome.positives)?;
            dataset::materialize(&a.output, NEGATIVE_CLASS, &outcome.negatives)?;
            for (path, msg) in &outcome.errors {
                warn!("skipped {}: {msg}", path.display());
            }
            info!(
                "{} positive, {} negative, {} skipped",
                outcome.positives.len(),
                outcome.negatives.len(),
                outcome.errors.len()
            );
        }
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let manifest = dataset::read_manifest(&a.manifest)?;
    let mut config = TrainConfig::for_arch(a.arch);
    config.mode = a.mode;
    config.epochs = a.epochs;
    config.batch_size = a.batch_size;
    config.lr = a.lr;
    config.profile = a.profile;
    config.seed = a.seed;
    config.image_size = a.image_size;
    if let Some(n) = a.normalize {
        config.normalize = n;
    }
    let summary = fit(
        &manifest,
        &a.manifest,
        &config,
        a.weights.as_deref(),
        &a.out,
    )?;
    let best = &summary.records[summary.best_epoch - 1];
    println!(
        "best val accuracy {:.4} at epoch {}; total {:.1}s; run written to {}",
        best.val_acc,
        best.epoch,
        summary.total_seconds,
        a.out.display()
    );
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Usage(format!(
            "{THREADS_ENV} must be a positive integer, got {value:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Usage(format!("cannot configure {n} threads: {e}")))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
