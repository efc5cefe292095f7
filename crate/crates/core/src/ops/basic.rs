use alloc::vec;

use crate::element::Element;
use crate::error::{invalid, Result};
use crate::tensor::Tensor;

pub fn relu_forward<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Subgradient 0 at the kink.
pub fn relu_backward<T: Element>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_parts_unchecked(x.shape().to_vec(), data)
}

pub fn zip_same_shape<T: Element>(
    op: &str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(invalid!(
            "{op}: operand shapes differ ({:?} vs {:?})",
            a.shape(),
            b.shape()
        ));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Ok(Tensor::from_parts_unchecked(a.shape().to_vec(), data))
}

/// `y[n, k] = sum_f x[n, f] * w[k, f] + b[k]`.
pub fn linear_forward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let (n, f) = x.dims2()?;
    let (k, wf) = w.dims2()?;
    if f != wf {
        return Err(invalid!(
            "linear: input features {f} != weight features {wf}"
        ));
    }
    if let Some(b) = b {
        if b.shape() != [k] {
            return Err(invalid!(
                "linear: bias must have shape [{k}], got {:?}",
                b.shape()
            ));
        }
    }
    let mut out = vec![T::zero(); n * k];
    if let Some(b) = b {
        for row in out.chunks_mut(k) {
            row.copy_from_slice(b.data());
        }
    }
    let beta = if b.is_some() { T::one() } else { T::zero() };
    T::gemm(
        n,
        f,
        k,
        T::one(),
        (x.data(), f as isize, 1),
        (w.data(), 1, f as isize),
        beta,
        (&mut out, k as isize, 1),
    );
    Ok(Tensor::from_parts_unchecked(vec![n, k], out))
}

pub struct LinearGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub fn linear_backward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
    need: (bool, bool, bool),
) -> LinearGrads<T> {
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let k = w.shape()[0];
    let dy = grad_out.data();
    let input = need.0.then(|| {
        let mut dx = vec![T::zero(); n * f];
        T::gemm(
            n,
            k,
            f,
            T::one(),
            (dy, k as isize, 1),
            (w.data(), f as isize, 1),
            T::zero(),
            (&mut dx, f as isize, 1),
        );
        Tensor::from_parts_unchecked(vec![n, f], dx)
    });
    let weight = need.1.then(|| {
        let mut dw = vec![T::zero(); k * f];
        T::gemm(
            k,
            n,
            f,
            T::one(),
            (dy, 1, k as isize),
            (x.data(), f as isize, 1),
            T::zero(),
            (&mut dw, f as isize, 1),
        );
        Tensor::from_parts_unchecked(vec![k, f], dw)
    });
    let bias = need.2.then(|| {
        let mut db = vec![0.0f64; k];
        for row in dy.chunks(k) {
            for (a, v) in db.iter_mut().zip(row) {
                *a += v.as_f64();
            }
        }
        Tensor::from_parts_unchecked(vec![k], db.into_iter().map(T::from_f64_lossy).collect())
    });
    LinearGrads {
        input,
        weight,
        bias,
    }
}
