//! Evaluation reports for a checkpoint: confusion matrix, metrics, sample
//! predictions and failures.

use std::fmt::Write as _;
use std::path::Path;

use cnnkit_core::augment::ProfileName;
use cnnkit_core::image::NormalizeMode;
use cnnkit_core::metrics::{aggregate_metrics, ConfusionMatrix, MetricReport};
use cnnkit_core::nn::{Arch, HEAD};
use cnnkit_core::split::{DatasetManifest, Split};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::fit::{evaluate, EvalArchive};
use crate::fsutil::{create_dir, write_atomic};
use crate::loader::Loader;

pub const CONFUSION_FILE: &str = "confusion.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";
pub const DEFAULT_SAMPLE_COUNT: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictionRecord {
    pub path: String,
    #[serde(rename = "true")]
    pub truth: String,
    pub predicted: String,
    pub confidence: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FailureRecord {
    pub path: String,
    #[serde(rename = "true")]
    pub truth: String,
    pub predicted: String,
    pub confidence: f32,
    pub probabilities: Vec<f32>,
}

fn confidence(probs: &[f32]) -> f32 {
    probs.iter().copied().fold(f32::NEG_INFINITY, f32::max)
}

/// The first `k` archived samples.
pub fn sample_predictions(
    archive: &EvalArchive,
    manifest: &DatasetManifest,
    k: usize,
) -> Vec<PredictionRecord> {
    (0..archive.samples.len().min(k))
        .map(|i| PredictionRecord {
            path: manifest.samples[archive.samples[i]].path.clone(),
            truth: manifest.classes[archive.labels[i]].clone(),
            predicted: manifest.classes[archive.predictions[i]].clone(),
            confidence: confidence(&archive.probabilities[i]),
        })
        .collect()
}

/// Every misclassified sample, most confident first; ties keep archive order.
pub fn failure_report(archive: &EvalArchive, manifest: &DatasetManifest) -> Vec<FailureRecord> {
    let mut out: Vec<FailureRecord> = (0..archive.samples.len())
        .filter(|&i| archive.labels[i] != archive.predictions[i])
        .map(|i| FailureRecord {
            path: manifest.samples[archive.samples[i]].path.clone(),
            truth: manifest.classes[archive.labels[i]].clone(),
            predicted: manifest.classes[archive.predictions[i]].clone(),
            confidence: confidence(&archive.probabilities[i]),
            probabilities: archive.probabilities[i].clone(),
        })
        .collect();
    out.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    out
}

/// A `#` header line followed by one JSON object per line.
pub fn to_jsonl<T: Serialize>(header: &str, records: &[T]) -> String {
    let mut s = format!("# {header}\n");
    for r in records {
        let _ = writeln!(
            s,
            "{}",
            serde_json::to_string(r).expect("record serializes")
        );
    }
    s
}

/// Overrides for the preprocessing recorded in the checkpoint.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub normalize: Option<NormalizeMode>,
    pub image_size: Option<usize>,
    pub batch_size: usize,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub confusion: ConfusionMatrix,
    pub metrics: MetricReport,
    pub predictions: Vec<PredictionRecord>,
    pub failures: Vec<FailureRecord>,
}

/// Evaluates a checkpoint on the manifest's validation split and writes the
/// four report files into `out`.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    manifest: &DatasetManifest,
    manifest_path: &Path,
    out: &Path,
    opts: EvalOptions,
) -> Result<EvaluationReport> {
    let ckpt = Checkpoint::read(checkpoint)?;
    let arch: Arch = ckpt
        .header
        .arch_id
        .parse()
        .map_err(|e: cnnkit_core::Error| Error::format(checkpoint, e.to_string()))?;
    let head = format!("{HEAD}.bias");
    let num_classes = ckpt
        .header
        .entries
        .iter()
        .find(|e| e.name == head)
        .map(|e| e.shape[0])
        .ok_or_else(|| Error::format(checkpoint, format!("missing entry {head}")))?;
    if num_classes != manifest.classes.len() {
        return Err(Error::format(
            checkpoint,
            format!(
                "checkpoint predicts {num_classes} classes but the manifest has {}",
                manifest.classes.len()
            ),
        ));
    }
    if let Some(p) = &ckpt.header.preprocess {
        if p.classes != manifest.classes {
            return Err(Error::format(
                checkpoint,
                format!(
                    "checkpoint classes {:?} differ from manifest classes {:?}",
                    p.classes, manifest.classes
                ),
            ));
        }
    }
    let mut model = arch.build::<f32>(num_classes)?;
    ckpt.apply_to(&mut model, checkpoint, |_| true)?;

    let recorded = ckpt.header.preprocess.as_ref();
    let normalize = opts
        .normalize
        .or(recorded.map(|p| p.normalize))
        .unwrap_or_else(|| cnnkit_core::train::TrainConfig::for_arch(arch).normalize);
    let image_size = opts
        .image_size
        .or(recorded.map(|p| p.image_size))
        .unwrap_or(224);
    let loader = Loader::new(
        manifest,
        manifest_path,
        ProfileName::None.profile(),
        normalize,
        image_size,
        manifest.seed,
    )?;
    let samples = loader.indices(Split::Val);
    if samples.is_empty() {
        return Err(Error::Usage("manifest has no val samples".into()));
    }
    let archive = evaluate(&model, &loader, &samples, opts.batch_size.max(1))?;
    let confusion =
        ConfusionMatrix::from_labels(&archive.labels, &archive.predictions, num_classes)?
            .with_class_names(manifest.classes.clone())?;
    let metrics = aggregate_metrics(&confusion)?;
    let predictions = sample_predictions(&archive, manifest, opts.samples);
    let failures = failure_report(&archive, manifest);

    create_dir(out)?;
    write_atomic(&out.join(CONFUSION_FILE), confusion.to_csv().as_bytes())?;
    let mut json = serde_json::to_vec_pretty(&metrics).expect("metrics serialize");
    json.push(b'\n');
    write_atomic(&out.join(METRICS_FILE), &json)?;
    write_atomic(
        &out.join(PREDICTIONS_FILE),
        to_jsonl(
            &format!(
                "first {} validation samples: path, true, predicted, confidence",
                opts.samples
            ),
            &predictions,
        )
        .as_bytes(),
    )?;
    write_atomic(
        &out.join(FAILURES_FILE),
        to_jsonl(
            "misclassified validation samples, most confident first",
            &failures,
        )
        .as_bytes(),
    )?;
    Ok(EvaluationReport {
        confusion,
        metrics,
        predictions,
        failures,
    })
}
