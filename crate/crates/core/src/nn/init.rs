#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::element::Element;
use crate::nn::model::{matches_prefix, Model, ParamRole};
use crate::rng::{domain, stream};

/// Resets every parameter and buffer.
///
/// Weights: U(-b, b) with b = sqrt(6 / fan_in). Biases and BN shifts: 0; BN
/// scales: 1; running mean 0, running variance 1. Parameter `i` draws from
/// stream `(seed, INIT, i)`.
pub fn init_parameters<T: Element>(model: &mut Model<T>, seed: u64) {
    init_matching(model, seed, &[""]);
}

/// Like [`init_parameters`] but limited to names under `prefixes`.
pub fn init_matching<T: Element>(model: &mut Model<T>, seed: u64, prefixes: &[&str]) {
    let selected = |name: &str| prefixes.iter().any(|p| matches_prefix(name, p));
    for (i, p) in model.params_mut().iter_mut().enumerate() {
        if !selected(&p.name) {
            continue;
        }
        match p.role {
            ParamRole::Weight { fan_in } => {
                let bound = (6.0 / fan_in as f64).sqrt();
                let mut rng = stream(seed, &[domain::INIT, i as u64]);
                for v in p.value.data_mut() {
                    *v = T::from_f64_lossy(rng.random_range(-bound..bound));
                }
            }
            ParamRole::Bias | ParamRole::Beta => p.value.data_mut().fill(T::zero()),
            ParamRole::Gamma => p.value.data_mut().fill(T::one()),
        }
    }
    for b in model.buffers_mut() {
        if !selected(&b.name) {
            continue;
        }
        let fill = if b.name.ends_with("running_var") {
            T::one()
        } else {
            T::zero()
        };
        b.value.data_mut().fill(fill);
    }
}
