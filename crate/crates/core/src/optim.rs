//! Adam with bias correction, restricted to a model's trainable parameters.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::error::{invalid, Error, Result};
use crate::nn::Model;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid!("learning rate must be positive, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(invalid!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(invalid!("eps must be positive, got {}", self.eps));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Slot<T> {
    param: usize,
    name: String,
    m: Vec<T>,
    v: Vec<T>,
}

/// Moment estimates for the parameters that were trainable when the optimizer
/// was created.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    cfg: AdamConfig,
    t: u64,
    slots: Vec<Slot<T>>,
}

impl<T: Element> Adam<T> {
    pub fn new(model: &Model<T>, cfg: AdamConfig) -> Result<Self> {
        cfg.validate()?;
        let slots = model
            .trainable_params()
            .map(|(i, p)| Slot {
                param: i,
                name: p.name.clone(),
                m: vec![T::zero(); p.value.len()],
                v: vec![T::zero(); p.value.len()],
            })
            .collect();
        Ok(Self { cfg, t: 0, slots })
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Names of the parameters this optimizer updates.
    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.name.as_str())
    }

    /// One update. `grads[i]` is the gradient of model parameter `i`; it must
    /// be present exactly for the parameters held by this optimizer.
    pub fn step(&mut self, model: &mut Model<T>, grads: &[Option<Tensor<T>>]) -> Result<()> {
        if grads.len() != model.params().len() {
            return Err(invalid!(
                "{} gradients for {} parameters",
                grads.len(),
                model.params().len()
            ));
        }
        let owned: Vec<usize> = self.slots.iter().map(|s| s.param).collect();
        for (i, g) in grads.iter().enumerate() {
            let held = owned.contains(&i);
            match (g, held) {
                (None, true) => {
                    return Err(invalid!("missing gradient for {}", model.params()[i].name))
                }
                (Some(_), false) => {
                    return Err(invalid!(
                        "gradient supplied for parameter {} outside the optimizer",
                        model.params()[i].name
                    ))
                }
                (Some(g), true) if g.shape() != model.params()[i].value.shape() => {
                    return Err(invalid!(
                        "gradient shape {:?} does not match {}",
                        g.shape(),
                        model.params()[i].name
                    ))
                }
                _ => {}
            }
        }
        let step = self.t + 1;
        for slot in &self.slots {
            let g = grads[slot.param].as_ref().expect("validated");
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericFailure(format!(
                    "non-finite gradient for {} at step {step}",
                    slot.name
                )));
            }
        }
        self.t = step;

        let c = self.cfg;
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let (one_b1, one_b2) = (
            T::from_f64_lossy(1.0 - c.beta1),
            T::from_f64_lossy(1.0 - c.beta2),
        );
        let bc1 = T::from_f64_lossy(1.0 - powi(c.beta1, step));
        let bc2 = T::from_f64_lossy(1.0 - powi(c.beta2, step));
        let lr = T::from_f64_lossy(c.lr);
        let eps = T::from_f64_lossy(c.eps);
        let params = model.params_mut();
        for slot in &mut self.slots {
            let g = grads[slot.param].as_ref().expect("validated").data();
            let theta = params[slot.param].value.data_mut();
            for ((th, (m, v)), &gi) in theta
                .iter_mut()
                .zip(slot.m.iter_mut().zip(slot.v.iter_mut()))
                .zip(g)
            {
                *m = b1 * *m + one_b1 * gi;
                *v = b2 * *v + one_b2 * gi * gi;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *th = *th - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

fn powi(base: f64, exp: u64) -> f64 {
    let mut acc = 1.0;
    for _ in 0..exp {
        acc *= base;
    }
    acc
}
