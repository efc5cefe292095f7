//! Per-channel batch normalization over N x C x H x W activations.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::element::Element;
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNormConfig {
    pub eps: f64,
    pub momentum: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            momentum: 0.1,
        }
    }
}

/// Statistics source: batch statistics (updating the running estimates) or
/// frozen running estimates.
pub enum NormStats<'a, T> {
    Train {
        running_mean: &'a mut [T],
        running_var: &'a mut [T],
    },
    Eval {
        running_mean: &'a [T],
        running_var: &'a [T],
    },
}

/// Forward result; `mean` and `inv_std` are the statistics actually applied.
pub struct BatchNormOutput<T> {
    pub output: Tensor<T>,
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
}

pub fn batch_norm2d_forward<T: Element>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    stats: NormStats<'_, T>,
    cfg: BatchNormConfig,
) -> Result<BatchNormOutput<T>> {
    let (n, c, h, w) = input.dims4()?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(invalid!(
            "batch_norm2d affine parameters must have shape [{c}], got {:?} and {:?}",
            gamma.shape(),
            beta.shape()
        ));
    }
    let hw = h * w;
    let count = n * hw;
    let x = input.data();
    let channel =
        |ch: usize| (0..n).flat_map(move |i| x[(i * c + ch) * hw..(i * c + ch + 1) * hw].iter());

    let check_running = |mean: &[T], var: &[T]| -> Result<()> {
        if mean.len() != c || var.len() != c {
            return Err(invalid!(
                "batch_norm2d running statistics must have {c} entries"
            ));
        }
        if let Some(i) = var.iter().position(|v| {
            !matches!(
                v.partial_cmp(&T::zero()),
                Some(Ordering::Greater | Ordering::Equal)
            )
        }) {
            return Err(Error::CorruptedState(alloc::format!(
                "running variance of channel {i} is {:?}",
                var[i]
            )));
        }
        Ok(())
    };

    let (mean, inv_std): (Vec<T>, Vec<T>) = match stats {
        NormStats::Train {
            running_mean,
            running_var,
        } => {
            check_running(running_mean, running_var)?;
            let mut means = Vec::with_capacity(c);
            let mut inv = Vec::with_capacity(c);
            for ch in 0..c {
                let mean = channel(ch).map(|v| v.as_f64()).sum::<f64>() / count as f64;
                let var = channel(ch)
                    .map(|v| {
                        let d = v.as_f64() - mean;
                        d * d
                    })
                    .sum::<f64>()
                    / count as f64;
                let unbiased = if count > 1 {
                    var * count as f64 / (count - 1) as f64
                } else {
                    var
                };
                let m = cfg.momentum;
                running_mean[ch] =
                    T::from_f64_lossy((1.0 - m) * running_mean[ch].as_f64() + m * mean);
                running_var[ch] =
                    T::from_f64_lossy((1.0 - m) * running_var[ch].as_f64() + m * unbiased);
                means.push(T::from_f64_lossy(mean));
                inv.push(T::from_f64_lossy(
                    1.0 / num_traits::Float::sqrt(var + cfg.eps),
                ));
            }
            (means, inv)
        }
        NormStats::Eval {
            running_mean,
            running_var,
        } => {
            check_running(running_mean, running_var)?;
            let inv = running_var
                .iter()
                .map(|v| T::from_f64_lossy(1.0 / num_traits::Float::sqrt(v.as_f64() + cfg.eps)))
                .collect();
            (running_mean.to_vec(), inv)
        }
    };

    let mut out = vec![T::zero(); x.len()];
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            let scale = gamma.data()[ch] * inv_std[ch];
            let shift = beta.data()[ch] - mean[ch] * scale;
            for (o, &v) in out[off..off + hw].iter_mut().zip(&x[off..off + hw]) {
                *o = v * scale + shift;
            }
        }
    }
    Ok(BatchNormOutput {
        output: Tensor::from_parts_unchecked(input.shape().to_vec(), out),
        mean,
        inv_std,
    })
}

pub struct BatchNormGrads<T> {
    pub input: Option<Tensor<T>>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// Backward pass. `training` selects whether the statistics depended on the
/// batch (and therefore on the input).
pub fn batch_norm2d_backward<T: Element>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    mean: &[T],
    inv_std: &[T],
    training: bool,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> BatchNormGrads<T> {
    let (n, c, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let hw = h * w;
    let count = (n * hw) as f64;
    let x = input.data();
    let dy = grad_out.data();

    let mut sum_dy = vec![0.0f64; c];
    let mut sum_dy_xhat = vec![0.0f64; c];
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * hw;
            let (m, s) = (mean[ch].as_f64(), inv_std[ch].as_f64());
            for (&g, &v) in dy[off..off + hw].iter().zip(&x[off..off + hw]) {
                let g = g.as_f64();
                sum_dy[ch] += g;
                sum_dy_xhat[ch] += g * (v.as_f64() - m) * s;
            }
        }
    }

    let dx = need_input.then(|| {
        let mut dx = vec![T::zero(); x.len()];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * hw;
                let s = inv_std[ch];
                let k = gamma.data()[ch] * s;
                if training {
                    let mdy = T::from_f64_lossy(sum_dy[ch] / count);
                    let mdx = T::from_f64_lossy(sum_dy_xhat[ch] / count);
                    let m = mean[ch];
                    for ((d, &g), &v) in dx[off..off + hw]
                        .iter_mut()
                        .zip(&dy[off..off + hw])
                        .zip(&x[off..off + hw])
                    {
                        *d = k * (g - mdy - (v - m) * s * mdx);
                    }
                } else {
                    for (d, &g) in dx[off..off + hw].iter_mut().zip(&dy[off..off + hw]) {
                        *d = k * g;
                    }
                }
            }
        }
        Tensor::from_parts_unchecked(input.shape().to_vec(), dx)
    });

    let to_tensor = |v: Vec<f64>| {
        Tensor::from_parts_unchecked(vec![c], v.into_iter().map(T::from_f64_lossy).collect())
    };
    BatchNormGrads {
        input: dx,
        gamma: to_tensor(sum_dy_xhat),
        beta: to_tensor(sum_dy),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(
        x: Vec<f64>,
        shape: &[usize],
        training: bool,
        gamma: f64,
        beta: f64,
    ) -> (Tensor<f64>, Vec<f64>, Vec<f64>) {
        let c = shape[1];
        let x = Tensor::from_vec(shape, x).unwrap();
        let g = Tensor::full(&[c], gamma).unwrap();
        let b = Tensor::full(&[c], beta).unwrap();
        let mut rm = vec![0.0; c];
        let mut rv = vec![1.0; c];
        let stats = if training {
            NormStats::Train {
                running_mean: &mut rm,
                running_var: &mut rv,
            }
        } else {
            NormStats::Eval {
                running_mean: &rm,
                running_var: &rv,
            }
        };
        let out = batch_norm2d_forward(&x, &g, &b, stats, BatchNormConfig::default())
            .unwrap()
            .output;
        (out, rm, rv)
    }

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let (y, _, _) = run(vec![3.0; 8], &[2, 1, 2, 2], true, 1.0, 0.0);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_values_normalize_to_unit() {
        let (y, rm, rv) = run(vec![0.0, 2.0], &[2, 1, 1, 1], true, 1.0, 0.0);
        let expected = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.data()[0] + expected).abs() < 1e-12);
        assert!((y.data()[1] - expected).abs() < 1e-12);
        // momentum 0.1 toward mean 1 and unbiased variance 2
        assert!((rm[0] - 0.1).abs() < 1e-12);
        assert!((rv[0] - (0.9 + 0.2)).abs() < 1e-12);
    }

    #[test]
    fn eval_identity_statistics_apply_affine() {
        let (y, _, _) = run(vec![-1.0, 0.5, 2.0], &[1, 1, 1, 3], false, 2.0, 3.0);
        for (o, x) in y.data().iter().zip([-1.0, 0.5, 2.0]) {
            assert!((o - (2.0 * x + 3.0)).abs() < 1e-4);
        }
    }

    #[test]
    fn negative_running_variance_is_corrupted_state() {
        let x = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0f32]).unwrap();
        let g = Tensor::full(&[1], 1.0f32).unwrap();
        let err = batch_norm2d_forward(
            &x,
            &g,
            &g,
            NormStats::Eval {
                running_mean: &[0.0],
                running_var: &[-1.0],
            },
            BatchNormConfig::default(),
        )
        .err()
        .unwrap();
        assert!(matches!(err, Error::CorruptedState(_)));
    }

    #[test]
    fn single_element_batch_has_zero_variance() {
        let (y, _, rv) = run(vec![4.0], &[1, 1, 1, 1], true, 1.0, 0.5);
        assert_eq!(y.data(), &[0.5]);
        assert!((rv[0] - 0.9).abs() < 1e-12);
    }
}
