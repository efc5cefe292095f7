use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

use crate::element::Element;
use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// Row-wise softmax of an N x C matrix, computed with a max shift.
pub fn softmax<T: Element>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, c) = logits.dims2()?;
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(c) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).as_f64().exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| T::from_f64_lossy(e / total)));
    }
    Ok(Tensor::from_parts_unchecked(logits.shape().to_vec(), out))
}

/// Mean negative log-likelihood of `targets` under softmax(`logits`).
/// Returns the loss and the softmax probabilities.
pub fn softmax_cross_entropy_forward<T: Element>(
    logits: &Tensor<T>,
    targets: &[usize],
) -> Result<(T, Tensor<T>)> {
    let (n, c) = logits.dims2()?;
    if targets.len() != n {
        return Err(invalid!(
            "cross-entropy: {} targets for {n} rows",
            targets.len()
        ));
    }
    if let Some(i) = targets.iter().position(|&t| t >= c) {
        return Err(invalid!(
            "cross-entropy: target {} of sample {i} outside [0, {c})",
            targets[i]
        ));
    }
    let mut total = 0.0f64;
    for (row, &t) in logits.data().chunks(c).zip(targets) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let lse = max
            + row
                .iter()
                .map(|v| (v.as_f64() - max).exp())
                .sum::<f64>()
                .ln();
        total += lse - row[t].as_f64();
    }
    let probs = softmax(logits)?;
    Ok((T::from_f64_lossy(total / n as f64), probs))
}

pub fn softmax_cross_entropy_backward<T: Element>(
    probs: &Tensor<T>,
    targets: &[usize],
    grad: T,
) -> Tensor<T> {
    let c = probs.shape()[1];
    let scale = grad / T::from_usize(targets.len()).unwrap();
    let mut d = probs.data().to_vec();
    for (row, &t) in d.chunks_mut(c).zip(targets) {
        row[t] = row[t] - T::one();
        row.iter_mut().for_each(|v| *v = *v * scale);
    }
    Tensor::from_parts_unchecked(probs.shape().to_vec(), d)
}
