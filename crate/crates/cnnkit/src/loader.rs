//! Batches of decoded, augmented and normalized samples from a manifest.

use std::path::{Path, PathBuf};

use cnnkit_core::augment::{AugmentProfile, Phase};
use cnnkit_core::image::NormalizeMode;
use cnnkit_core::rng::{domain, stream};
use cnnkit_core::split::{DatasetManifest, Split};
use cnnkit_core::Tensor;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dataset::{load_image, sample_path};
use crate::error::{Error, Result};

/// One decoded batch. `samples` are indices into the manifest's sample list.
#[derive(Clone, Debug)]
pub struct Batch {
    pub samples: Vec<usize>,
    pub input: Tensor<f32>,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Loader {
    paths: Vec<PathBuf>,
    labels: Vec<usize>,
    splits: Vec<Split>,
    profile: AugmentProfile,
    normalize: NormalizeMode,
    image_size: usize,
    seed: u64,
}

impl Loader {
    pub fn new(
        manifest: &DatasetManifest,
        manifest_path: &Path,
        profile: AugmentProfile,
        normalize: NormalizeMode,
        image_size: usize,
        seed: u64,
    ) -> Result<Self> {
        profile.validate()?;
        Ok(Self {
            paths: manifest
                .samples
                .iter()
                .map(|s| sample_path(manifest, manifest_path, &s.path))
                .collect(),
            labels: manifest.samples.iter().map(|s| s.class_index).collect(),
            splits: manifest.samples.iter().map(|s| s.split).collect(),
            profile,
            normalize,
            image_size,
            seed,
        })
    }

    /// Manifest indices of one split, in manifest order.
    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.splits.len())
            .filter(|&i| self.splits[i] == which)
            .collect()
    }

    /// Training order for `epoch`: the train indices shuffled with stream
    /// `(seed, SHUFFLE, epoch)`.
    pub fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut order = self.indices(Split::Train);
        order.shuffle(&mut stream(self.seed, &[domain::SHUFFLE, epoch as u64]));
        order
    }

    pub fn path(&self, sample: usize) -> &Path {
        &self.paths[sample]
    }

    /// Decodes the given samples in parallel. Training samples draw their
    /// augmentation from stream `(seed, AUGMENT, epoch, sample)`, so the batch
    /// is independent of the worker count.
    pub fn load(&self, samples: &[usize], phase: Phase, epoch: usize) -> Result<Batch> {
        let s = self.image_size;
        let tensors: Vec<Tensor<f32>> = samples
            .par_iter()
            .map(|&i| {
                let img = load_image(&self.paths[i])?;
                let mut rng = stream(self.seed, &[domain::AUGMENT, epoch as u64, i as u64]);
                self.profile
                    .apply(&img, phase, s, self.normalize, &mut rng)
                    .map_err(|e| Error::format(&self.paths[i], e.to_string()))
            })
            .collect::<Result<_>>()?;
        let mut data = Vec::with_capacity(samples.len() * 3 * s * s);
        for t in tensors {
            data.extend_from_slice(t.data());
        }
        Ok(Batch {
            samples: samples.to_vec(),
            input: Tensor::from_vec(&[samples.len(), 3, s, s], data)?,
            labels: samples.iter().map(|&i| self.labels[i]).collect(),
        })
    }
}
