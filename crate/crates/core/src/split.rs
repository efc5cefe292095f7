//! Dataset manifests and the seeded per-class train/validation split.

use alloc::string::String;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{domain, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub path: String,
    pub class_index: usize,
    pub split: Split,
}

/// Class list plus every sample with its split assignment.
///
/// `root` is the directory sample paths are relative to; it is empty when the
/// manifest sits next to the class folders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default)]
    pub root: String,
    pub classes: Vec<String>,
    pub samples: Vec<SampleRecord>,
    pub seed: u64,
    pub val_fraction: f64,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(invalid!("manifest has no classes"));
        }
        for (i, a) in self.classes.iter().enumerate() {
            if self.classes[..i].contains(a) {
                return Err(invalid!("duplicate class name {a:?}"));
            }
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(invalid!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            ));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.class_index >= self.classes.len() {
                return Err(invalid!(
                    "sample {i} ({}) has class index {} of {}",
                    s.path,
                    s.class_index,
                    self.classes.len()
                ));
            }
        }
        Ok(())
    }

    pub fn split(&self, which: Split) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(move |s| s.split == which)
    }

    pub fn count(&self, which: Split) -> usize {
        self.split(which).count()
    }
}

/// Validation count for a class of `n` samples: `round(f * n)` clamped to
/// `[1, n - 1]`; a single-sample class keeps it for training.
pub fn val_count(n: usize, val_fraction: f64) -> usize {
    if n < 2 {
        return 0;
    }
    ((val_fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// Result of [`deterministic_split`]: the manifest plus classes that were
/// dropped for having no samples.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitOutcome {
    pub manifest: DatasetManifest,
    pub dropped: Vec<String>,
}

/// Shuffles each class with stream `(seed, SPLIT, class position)` and
/// assigns the first [`val_count`] shuffled samples to validation. Samples keep
/// their input order in the manifest; empty classes are dropped and the
/// remaining classes renumbered.
pub fn deterministic_split(
    classes: &[(String, Vec<String>)],
    val_fraction: f64,
    seed: u64,
) -> Result<SplitOutcome> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(invalid!(
            "val_fraction must lie in (0, 1), got {val_fraction}"
        ));
    }
    let mut names = Vec::new();
    let mut samples = Vec::new();
    let mut dropped = Vec::new();
    for (name, paths) in classes {
        if paths.is_empty() {
            dropped.push(name.clone());
            continue;
        }
        let class_index = names.len();
        names.push(name.clone());
        let mut order: Vec<usize> = (0..paths.len()).collect();
        order.shuffle(&mut stream(seed, &[domain::SPLIT, class_index as u64]));
        let mut is_val = alloc::vec![false; paths.len()];
        for &i in &order[..val_count(paths.len(), val_fraction)] {
            is_val[i] = true;
        }
        samples.extend(paths.iter().zip(is_val).map(|(p, v)| SampleRecord {
            path: p.clone(),
            class_index,
            split: if v { Split::Val } else { Split::Train },
        }));
    }
    if names.is_empty() {
        return Err(invalid!("no class has any samples"));
    }
    let manifest = DatasetManifest {
        root: String::new(),
        classes: names,
        samples,
        seed,
        val_fraction,
    };
    manifest.validate()?;
    Ok(SplitOutcome { manifest, dropped })
}
