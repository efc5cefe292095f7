//! Training runs: epochs of training and validation, curves, checkpoints.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cnnkit_core::augment::Phase;
use cnnkit_core::nn::model::matches_prefix;
use cnnkit_core::nn::{init_matching, init_parameters, Model, HEAD};
use cnnkit_core::optim::Adam;
use cnnkit_core::split::{DatasetManifest, Split};
use cnnkit_core::train::{eval_batch, train_step, EpochRecord, TrainConfig, TrainMode};
use log::info;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{save, Checkpoint, Preprocess};
use crate::error::{Error, Result};
use crate::fsutil::{create_dir, write_atomic};
use crate::loader::Loader;

pub const CONFIG_FILE: &str = "config.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const RUN_FILE: &str = "run.json";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

/// Everything needed to repeat a run on the same data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub total_seconds: f64,
    /// Names of the parameters the optimizer updated.
    pub optimizer_params: Vec<String>,
}

/// Predictions and softmax outputs for a list of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalArchive {
    pub samples: Vec<usize>,
    pub labels: Vec<usize>,
    pub predictions: Vec<usize>,
    /// One probability row per sample.
    pub probabilities: Vec<Vec<f32>>,
    pub loss_sum: f64,
}

impl EvalArchive {
    pub fn correct(&self) -> usize {
        self.labels
            .iter()
            .zip(&self.predictions)
            .filter(|(t, p)| t == p)
            .count()
    }

    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.samples.len().max(1) as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.samples.len().max(1) as f64
    }
}

/// Evaluation-mode pass over `samples` in the given order.
pub fn evaluate(
    model: &Model<f32>,
    loader: &Loader,
    samples: &[usize],
    batch_size: usize,
) -> Result<EvalArchive> {
    let mut out = EvalArchive {
        samples: Vec::with_capacity(samples.len()),
        labels: Vec::with_capacity(samples.len()),
        predictions: Vec::with_capacity(samples.len()),
        probabilities: Vec::with_capacity(samples.len()),
        loss_sum: 0.0,
    };
    for chunk in samples.chunks(batch_size.max(1)) {
        let batch = loader.load(chunk, Phase::Val, 0)?;
        let r = eval_batch(model, batch.input, &batch.labels)?;
        let c = r.probabilities.shape()[1];
        out.loss_sum += r.loss_sum;
        out.probabilities
            .extend(r.probabilities.data().chunks_exact(c).map(<[f32]>::to_vec));
        out.predictions.extend(r.predictions);
        out.labels.extend(batch.labels);
        out.samples.extend(batch.samples);
    }
    Ok(out)
}

/// `epoch,phase,loss,accuracy,seconds` with six decimals.
pub fn curves_csv(records: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,phase,loss,accuracy,seconds\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},train,{:.6},{:.6},{:.6}",
            r.epoch, r.train_loss, r.train_acc, r.train_seconds
        );
        let _ = writeln!(
            s,
            "{},val,{:.6},{:.6},{:.6}",
            r.epoch, r.val_loss, r.val_acc, r.val_seconds
        );
    }
    s
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Builds the model for a run: random initialization, or for transfer the
/// imported backbone with a fresh head and everything but the head frozen.
pub fn prepare_model(
    config: &TrainConfig,
    num_classes: usize,
    weights: Option<&Path>,
) -> Result<Model<f32>> {
    let mut model = config.arch.build::<f32>(num_classes)?;
    init_parameters(&mut model, config.seed);
    match (config.mode, weights) {
        (TrainMode::Scratch, None) => {}
        (TrainMode::Scratch, Some(_)) => {
            return Err(Error::Usage(
                "--weights is only accepted with --mode transfer".into(),
            ));
        }
        (TrainMode::Transfer, None) => {
            return Err(Error::Usage(
                "--mode transfer requires --weights with the imported backbone".into(),
            ));
        }
        (TrainMode::Transfer, Some(path)) => {
            let ckpt = Checkpoint::read(path)?;
            let loaded = ckpt.apply_to(&mut model, path, |n| !matches_prefix(n, HEAD))?;
            init_matching(&mut model, config.seed, &[HEAD]);
            model.set_all_trainable(false);
            model.set_trainable(&[HEAD], true)?;
            info!("imported {loaded} backbone tensors from {}", path.display());
        }
    }
    Ok(model)
}

fn with_context(e: Error, context: &str) -> Error {
    match e {
        Error::Core(cnnkit_core::Error::NumericFailure(m)) => Error::Core(
            cnnkit_core::Error::NumericFailure(format!("{context}: {m}")),
        ),
        other => other,
    }
}

/// Trains `config.epochs` epochs and writes the run directory:
/// `config.json` (before training starts), `curves.csv` (after every epoch),
/// `best.ckpt`, `final.ckpt` and `run.json`.
pub fn fit(
    manifest: &DatasetManifest,
    manifest_path: &Path,
    config: &TrainConfig,
    weights: Option<&Path>,
    out: &Path,
) -> Result<RunSummary> {
    config.validate()?;
    for which in [Split::Train, Split::Val] {
        if manifest.count(which) == 0 {
            return Err(Error::Usage(
                format!("manifest has no {which:?} samples").to_lowercase(),
            ));
        }
    }
    let mut model = prepare_model(config, manifest.classes.len(), weights)?;
    create_dir(out)?;
    let snapshot = RunConfig {
        manifest: manifest_path.to_path_buf(),
        weights: weights.map(Path::to_path_buf),
        train: config.clone(),
    };
    write_json(&out.join(CONFIG_FILE), &snapshot)?;

    let loader = Loader::new(
        manifest,
        manifest_path,
        config.profile.profile(),
        config.normalize,
        config.image_size,
        config.seed,
    )?;
    let preprocess = Preprocess {
        normalize: config.normalize,
        image_size: config.image_size,
        classes: manifest.classes.clone(),
    };
    let mut adam = Adam::new(&model, config.adam())?;
    let optimizer_params: Vec<String> = adam.param_names().map(str::to_string).collect();
    info!("optimizing {} parameter tensors", optimizer_params.len());
    let val_samples = loader.indices(Split::Val);

    let started = Instant::now();
    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64)> = None;
    for epoch in 1..=config.epochs {
        let t0 = Instant::now();
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0, 0);
        for (b, chunk) in loader
            .epoch_order(epoch)
            .chunks(config.batch_size)
            .enumerate()
        {
            let batch = loader.load(chunk, Phase::Train, epoch)?;
            let step = train_step(&mut model, &mut adam, batch.input, &batch.labels)
                .map_err(|e| with_context(e.into(), &format!("epoch {epoch} batch {b}")))?;
            loss_sum += step.loss * step.batch as f64;
            correct += step.correct;
            seen += step.batch;
        }
        let train_seconds = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let val = evaluate(&model, &loader, &val_samples, config.batch_size)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            val_loss: val.mean_loss(),
            val_acc: val.accuracy(),
            train_seconds,
            val_seconds: t1.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}/{}: train loss {:.4} acc {:.4}, val loss {:.4} acc {:.4} ({:.1}s)",
            config.epochs,
            record.train_loss,
            record.train_acc,
            record.val_loss,
            record.val_acc,
            record.train_seconds + record.val_seconds
        );
        if best.is_none_or(|(_, acc)| record.val_acc > acc) {
            best = Some((epoch, record.val_acc));
            save(&model, &out.join(BEST_CHECKPOINT), Some(preprocess.clone()))?;
        }
        records.push(record);
        write_atomic(&out.join(CURVES_FILE), curves_csv(&records).as_bytes())?;
    }
    save(&model, &out.join(FINAL_CHECKPOINT), Some(preprocess))?;
    let summary = RunSummary {
        records,
        best_epoch: best.map_or(0, |(e, _)| e),
        total_seconds: started.elapsed().as_secs_f64(),
        optimizer_params,
    };
    write_json(&out.join(RUN_FILE), &summary)?;
    Ok(summary)
}
