//! Training configuration and the per-batch training and evaluation steps.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::ProfileName;
use crate::element::Element;
use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::image::NormalizeMode;
use crate::nn::{Arch, Mode, Model};
use crate::optim::{Adam, AdamConfig};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    #[default]
    Scratch,
    /// Imported backbone, frozen; only the classification head trains.
    Transfer,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Scratch => "scratch",
            Self::Transfer => "transfer",
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scratch" => Ok(Self::Scratch),
            "transfer" => Ok(Self::Transfer),
            _ => Err(invalid!(
                "unknown mode {s:?}; expected one of: scratch, transfer"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: Arch,
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub seed: u64,
    pub normalize: NormalizeMode,
    pub profile: ProfileName,
    /// Square side length fed to the network.
    pub image_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_arch(Arch::Custom)
    }
}

impl TrainConfig {
    /// Defaults, with unit normalization for the custom network and ImageNet
    /// statistics for the baselines.
    pub fn for_arch(arch: Arch) -> Self {
        let adam = AdamConfig::default();
        Self {
            arch,
            mode: TrainMode::Scratch,
            epochs: 5,
            batch_size: 32,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps_adam: adam.eps,
            seed: 42,
            normalize: match arch {
                Arch::Custom => NormalizeMode::Unit,
                Arch::Resnet18 | Arch::Vgg16 => NormalizeMode::Imagenet,
            },
            profile: ProfileName::None,
            image_size: 224,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps_adam,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid!("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid!("batch size must be at least 1"));
        }
        if self.image_size < 8 {
            return Err(invalid!(
                "image size must be at least 8, got {}",
                self.image_size
            ));
        }
        self.adam().validate()
    }
}

/// Per-epoch monitoring values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub train_seconds: f64,
    pub val_seconds: f64,
}

/// Index of the largest value in each row of an N×C matrix; ties go to the
/// lower index.
pub fn argmax_rows<T: Element>(m: &Tensor<T>) -> Result<Vec<usize>> {
    let (_, c) = m.dims2()?;
    Ok(m.data()
        .chunks_exact(c)
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

fn check_batch<T: Element>(input: &Tensor<T>, labels: &[usize]) -> Result<()> {
    let (n, ..) = input.dims4()?;
    if n != labels.len() {
        return Err(invalid!("batch of {n} images with {} labels", labels.len()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    pub correct: usize,
    pub batch: usize,
}

/// Forward in training mode, backward, and one Adam update.
pub fn train_step<T: Element>(
    model: &mut Model<T>,
    adam: &mut Adam<T>,
    input: Tensor<T>,
    labels: &[usize],
) -> Result<StepOutcome> {
    check_batch(&input, labels)?;
    let mut g = Graph::new();
    let params = model.bind(&mut g, true);
    let x = g.leaf(input, false);
    let pass = model.forward(&mut g, &params, x, Mode::Train)?;
    let loss = g.softmax_cross_entropy(pass.output, labels)?;
    let loss_value = g.value(loss).item().expect("scalar").as_f64();
    if !loss_value.is_finite() {
        return Err(Error::NumericFailure(format!(
            "non-finite training loss {loss_value}"
        )));
    }
    let correct = argmax_rows(g.value(pass.output))?
        .iter()
        .zip(labels)
        .filter(|(p, t)| p == t)
        .count();
    g.backward(loss)?;
    let grads: Vec<Option<Tensor<T>>> = params
        .iter()
        .zip(model.params())
        .map(|(&v, p)| if p.trainable { g.take_grad(v) } else { None })
        .collect();
    drop(g);
    adam.step(model, &grads)?;
    Ok(StepOutcome {
        loss: loss_value,
        correct,
        batch: labels.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutcome<T> {
    /// Sum of per-sample cross-entropy.
    pub loss_sum: f64,
    pub correct: usize,
    pub predictions: Vec<usize>,
    /// Softmax probabilities, N×C.
    pub probabilities: Tensor<T>,
}

/// Evaluation-mode forward pass; the model is not modified.
pub fn eval_batch<T: Element>(
    model: &Model<T>,
    input: Tensor<T>,
    labels: &[usize],
) -> Result<EvalOutcome<T>> {
    check_batch(&input, labels)?;
    let mut g = Graph::new();
    let params = model.bind(&mut g, false);
    let x = g.leaf(input, false);
    let pass = model.forward_eval(&mut g, &params, x)?;
    let loss = g.softmax_cross_entropy(pass.output, labels)?;
    let mean = g.value(loss).item().expect("scalar").as_f64();
    let predictions = argmax_rows(g.value(pass.output))?;
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, t)| p == t)
        .count();
    let probabilities = g.probabilities(loss).expect("cross-entropy node").clone();
    Ok(EvalOutcome {
        loss_sum: mean * labels.len() as f64,
        correct,
        predictions,
        probabilities,
    })
}
