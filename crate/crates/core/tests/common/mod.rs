//! Helpers shared by the integration tests.
#![allow(dead_code)]

use cnnkit_core::nn::{Mode, Model};
use cnnkit_core::ops::Conv2dParams;
use cnnkit_core::{Graph, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

pub fn rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

/// Uniform values with magnitude at least `gap`, keeping ReLU inputs away
/// from the kink.
pub fn away_from_zero(shape: &[usize], gap: f64, seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = r.random_range(gap..1.0);
            if r.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Distinct values spaced 0.05 apart in shuffled order, so pooling windows
/// have no ties.
pub fn distinct(shape: &[usize], seed: u64) -> Tensor<f64> {
    use rand::seq::SliceRandom;
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - n as f64 * 0.025).collect();
    v.shuffle(&mut rng(seed));
    Tensor::from_vec(shape, v).unwrap()
}

/// `sum(y * r)` for a fixed random `r`, a scalar probe that exercises every
/// output element with a distinct weight.
pub fn probe(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let r = uniform(g.value(y).shape(), -1.0, 1.0, seed);
    let r = g.leaf(r, false);
    let prod = g.mul(y, r)?;
    g.sum(prod)
}

/// Runs `model` with parameter `which` replaced by `x` (or the input when
/// `which` is `None`) and returns the probe of the output.
pub fn model_probe(
    model: &mut Model<f64>,
    g: &mut Graph<f64>,
    x: Var,
    which: Option<usize>,
    input: &Tensor<f64>,
    mode: Mode,
    seed: u64,
) -> Result<Var> {
    let mut params = model.bind(g, false);
    let input = match which {
        None => x,
        Some(i) => {
            params[i] = x;
            g.leaf(input.clone(), false)
        }
    };
    let out = model.forward(g, &params, input, mode)?.output;
    probe(g, out, seed)
}

/// Direct seven-loop convolution accumulated in f64.
pub fn naive_conv2d<T: cnnkit_core::Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    p: Conv2dParams,
) -> Tensor<T> {
    let (n, cin, h, wd) = x.dims4().unwrap();
    let (cout, cin_g, kh, kw) = w.dims4().unwrap();
    let oh = (h + 2 * p.padding - kh) / p.stride + 1;
    let ow = (wd + 2 * p.padding - kw) / p.stride + 1;
    let cout_g = cout / p.groups;
    assert_eq!(cin_g * p.groups, cin);
    let mut out = vec![T::zero(); n * cout * oh * ow];
    for b_ in 0..n {
        for co in 0..cout {
            let grp = co / cout_g;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.map_or(0.0, |b| b.data()[co].as_f64());
                    for ci in 0..cin_g {
                        let c = grp * cin_g + ci;
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * p.stride + ky) as isize - p.padding as isize;
                                let ix = (ox * p.stride + kx) as isize - p.padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x.data()
                                    [((b_ * cin + c) * h + iy as usize) * wd + ix as usize]
                                    .as_f64();
                                let wv = w.data()[((co * cin_g + ci) * kh + ky) * kw + kx].as_f64();
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((b_ * cout + co) * oh + oy) * ow + ox] = T::from_f64_lossy(acc);
                }
            }
        }
    }
    Tensor::from_vec(&[n, cout, oh, ow], out).unwrap()
}
