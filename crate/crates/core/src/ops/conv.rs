//! 2-D convolution lowered to matrix products (im2col / col2im).
//!
//! Layout is N x C x H x W for activations and Cout x (Cin/groups) x kh x kw for
//! weights. The operator is a cross-correlation with zero padding.

use alloc::vec;
use alloc::vec::Vec;

use crate::element::Element;
use crate::error::{invalid, Result};
use crate::par::{map_chunks_mut, IMAGE_CHUNK};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dParams {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv2dParams {
    pub const fn new(stride: usize, padding: usize, groups: usize) -> Self {
        Self {
            stride,
            padding,
            groups,
        }
    }
}

impl Default for Conv2dParams {
    fn default() -> Self {
        Self::new(1, 0, 1)
    }
}

/// Resolved extents of one convolution call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    pub fn new(
        input: &[usize],
        weight: &[usize],
        bias: Option<&[usize]>,
        p: Conv2dParams,
    ) -> Result<Self> {
        let &[n, cin, h, w] = input else {
            return Err(invalid!(
                "conv2d input must be N x C x H x W, got {input:?}"
            ));
        };
        let &[cout, cin_g, kh, kw] = weight else {
            return Err(invalid!(
                "conv2d weight must be Cout x Cin/groups x kh x kw, got {weight:?}"
            ));
        };
        if input.contains(&0) || weight.contains(&0) {
            return Err(invalid!(
                "conv2d extents must be positive, got input {input:?} and weight {weight:?}"
            ));
        }
        if p.stride == 0 {
            return Err(invalid!("conv2d stride must be positive"));
        }
        if p.groups == 0 {
            return Err(invalid!("conv2d groups must be positive"));
        }
        if cin % p.groups != 0 {
            return Err(invalid!(
                "conv2d input channels {cin} not divisible by groups {}",
                p.groups
            ));
        }
        if cout % p.groups != 0 {
            return Err(invalid!(
                "conv2d output channels {cout} not divisible by groups {}",
                p.groups
            ));
        }
        if cin / p.groups != cin_g {
            return Err(invalid!(
                "conv2d weight input-channel extent {cin_g} != input channels {cin} / groups {}",
                p.groups
            ));
        }
        let ph = h + 2 * p.padding;
        let pw = w + 2 * p.padding;
        if kh > ph {
            return Err(invalid!(
                "conv2d kernel height {kh} exceeds padded input height {ph}"
            ));
        }
        if kw > pw {
            return Err(invalid!(
                "conv2d kernel width {kw} exceeds padded input width {pw}"
            ));
        }
        if let Some(b) = bias {
            if b != [cout] {
                return Err(invalid!("conv2d bias must have shape [{cout}], got {b:?}"));
            }
        }
        Ok(Self {
            n,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            stride: p.stride,
            padding: p.padding,
            groups: p.groups,
            oh: (ph - kh) / p.stride + 1,
            ow: (pw - kw) / p.stride + 1,
        })
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.n, self.cout, self.oh, self.ow]
    }

    fn cin_g(&self) -> usize {
        self.cin / self.groups
    }

    fn cout_g(&self) -> usize {
        self.cout / self.groups
    }

    /// Rows of the patch matrix for one group.
    fn k(&self) -> usize {
        self.cin_g() * self.kh * self.kw
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.padding == 0
    }
}

/// Output columns `[lo, hi)` whose kernel tap `kj` lands inside the image row.
fn valid_columns(g: &ConvGeometry, kj: usize) -> (usize, usize) {
    let lo = g.padding.saturating_sub(kj).div_ceil(g.stride).min(g.ow);
    let hi = (g.w + g.padding)
        .saturating_sub(kj)
        .div_ceil(g.stride)
        .min(g.ow);
    (lo, hi.max(lo))
}

/// Fills `cols` (K x OH*OW) with the receptive fields of channels
/// `[c0, c0 + cin_g)` of one image.
fn im2col<T: Element>(g: &ConvGeometry, img: &[T], c0: usize, cols: &mut [T]) {
    let ohw = g.oh * g.ow;
    let mut row = 0;
    for c in c0..c0 + g.cin_g() {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let dst = &mut cols[row * ohw..(row + 1) * ohw];
                for oy in 0..g.oh {
                    let out_row = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let (lo, hi) = valid_columns(g, kj);
                    out_row[..lo].fill(T::zero());
                    out_row[hi..].fill(T::zero());
                    if lo < hi {
                        let first = lo * g.stride + kj - g.padding;
                        if g.stride == 1 {
                            out_row[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                        } else {
                            for (o, &v) in out_row[lo..hi]
                                .iter_mut()
                                .zip(src[first..].iter().step_by(g.stride))
                            {
                                *o = v;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatters patch-matrix gradients back onto channels `[c0, c0 + cin_g)`.
fn col2im<T: Element>(g: &ConvGeometry, cols: &[T], c0: usize, img: &mut [T]) {
    let ohw = g.oh * g.ow;
    let mut row = 0;
    for c in c0..c0 + g.cin_g() {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let src = &cols[row * ohw..(row + 1) * ohw];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let (lo, hi) = valid_columns(g, kj);
                    if lo < hi {
                        let first = lo * g.stride + kj - g.padding;
                        let row_src = &src[oy * g.ow + lo..oy * g.ow + hi];
                        for (d, &v) in dst[first..].iter_mut().step_by(g.stride).zip(row_src) {
                            *d = *d + v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

pub fn conv2d_forward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    params: Conv2dParams,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(
        input.shape(),
        weight.shape(),
        bias.map(|b| b.shape()),
        params,
    )?;
    let in_img = g.cin * g.h * g.w;
    let ohw = g.oh * g.ow;
    let out_img = g.cout * ohw;
    let (k, cout_g) = (g.k(), g.cout_g());
    let x = input.data();
    let wt = weight.data();
    let mut out = vec![T::zero(); g.n * out_img];

    map_chunks_mut(&mut out, IMAGE_CHUNK * out_img, |chunk, out_chunk| {
        let mut cols = if g.is_pointwise() {
            Vec::new()
        } else {
            vec![T::zero(); k * ohw]
        };
        for (i, out_n) in out_chunk.chunks_mut(out_img).enumerate() {
            let n = chunk * IMAGE_CHUNK + i;
            let img = &x[n * in_img..(n + 1) * in_img];
            for grp in 0..g.groups {
                let c0 = grp * g.cin_g();
                let patches: &[T] = if g.is_pointwise() {
                    &img[c0 * ohw..(c0 + g.cin_g()) * ohw]
                } else {
                    im2col(&g, img, c0, &mut cols);
                    &cols
                };
                let o0 = grp * cout_g;
                T::gemm(
                    cout_g,
                    k,
                    ohw,
                    T::one(),
                    (&wt[o0 * k..(o0 + cout_g) * k], k as isize, 1),
                    (patches, ohw as isize, 1),
                    T::zero(),
                    (&mut out_n[o0 * ohw..(o0 + cout_g) * ohw], ohw as isize, 1),
                );
            }
            if let Some(b) = bias {
                for (plane, &bv) in out_n.chunks_mut(ohw).zip(b.data()) {
                    plane.iter_mut().for_each(|v| *v = *v + bv);
                }
            }
        }
    });
    Ok(Tensor::from_parts_unchecked(g.output_shape().to_vec(), out))
}

/// Gradients of a convolution. Each requested output is `Some`.
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub fn conv2d_backward<T: Element>(
    g: &ConvGeometry,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let (need_x, need_w, need_b) = need;
    let in_img = g.cin * g.h * g.w;
    let ohw = g.oh * g.ow;
    let out_img = g.cout * ohw;
    let (k, cout_g, cin_g) = (g.k(), g.cout_g(), g.cin_g());
    let x = input.data();
    let wt = weight.data();
    let dy = grad_out.data();

    let mut dx = vec![T::zero(); if need_x { g.n * in_img } else { 0 }];
    let run_chunk = |chunk: usize, dx_chunk: &mut [T]| -> Vec<T> {
        let mut dw = vec![T::zero(); if need_w { weight.len() } else { 0 }];
        let mut cols = vec![T::zero(); if g.is_pointwise() { 0 } else { k * ohw }];
        let mut dcols = vec![
            T::zero();
            if g.is_pointwise() || !need_x {
                0
            } else {
                k * ohw
            }
        ];
        let first = chunk * IMAGE_CHUNK;
        let last = (first + IMAGE_CHUNK).min(g.n);
        for n in first..last {
            let img = &x[n * in_img..(n + 1) * in_img];
            let dy_n = &dy[n * out_img..(n + 1) * out_img];
            for grp in 0..g.groups {
                let c0 = grp * cin_g;
                let o0 = grp * cout_g;
                let dy_g = &dy_n[o0 * ohw..(o0 + cout_g) * ohw];
                let w_g = &wt[o0 * k..(o0 + cout_g) * k];
                if need_w {
                    let patches: &[T] = if g.is_pointwise() {
                        &img[c0 * ohw..(c0 + cin_g) * ohw]
                    } else {
                        im2col(g, img, c0, &mut cols);
                        &cols
                    };
                    // dW_g += dY_g * patches^T
                    T::gemm(
                        cout_g,
                        ohw,
                        k,
                        T::one(),
                        (dy_g, ohw as isize, 1),
                        (patches, 1, ohw as isize),
                        T::one(),
                        (&mut dw[o0 * k..(o0 + cout_g) * k], k as isize, 1),
                    );
                }
                if need_x {
                    let dx_n = &mut dx_chunk[(n - first) * in_img..(n - first + 1) * in_img];
                    if g.is_pointwise() {
                        T::gemm(
                            k,
                            cout_g,
                            ohw,
                            T::one(),
                            (w_g, 1, k as isize),
                            (dy_g, ohw as isize, 1),
                            T::zero(),
                            (&mut dx_n[c0 * ohw..(c0 + cin_g) * ohw], ohw as isize, 1),
                        );
                    } else {
                        // dcols = W_g^T * dY_g
                        T::gemm(
                            k,
                            cout_g,
                            ohw,
                            T::one(),
                            (w_g, 1, k as isize),
                            (dy_g, ohw as isize, 1),
                            T::zero(),
                            (&mut dcols, ohw as isize, 1),
                        );
                        col2im(g, &dcols, c0, dx_n);
                    }
                }
            }
        }
        dw
    };

    let partials = if need_x {
        map_chunks_mut(&mut dx, IMAGE_CHUNK * in_img, run_chunk)
    } else if need_w {
        // No input gradient buffer to split; drive chunks over a placeholder.
        let mut slots = vec![T::zero(); g.n.div_ceil(IMAGE_CHUNK)];
        map_chunks_mut(&mut slots, 1, |c, _| run_chunk(c, &mut []))
    } else {
        Vec::new()
    };

    let dw = need_w.then(|| {
        let mut acc = vec![T::zero(); weight.len()];
        for p in &partials {
            for (a, &v) in acc.iter_mut().zip(p) {
                *a = *a + v;
            }
        }
        Tensor::from_parts_unchecked(weight.shape().to_vec(), acc)
    });

    let db = need_b.then(|| {
        let mut acc = vec![0.0f64; g.cout];
        for n in 0..g.n {
            for (c, a) in acc.iter_mut().enumerate() {
                let plane = &dy[n * out_img + c * ohw..n * out_img + (c + 1) * ohw];
                *a += plane.iter().map(|v| v.as_f64()).sum::<f64>();
            }
        }
        Tensor::from_parts_unchecked(
            vec![g.cout],
            acc.into_iter().map(T::from_f64_lossy).collect(),
        )
    });

    ConvGrads {
        input: need_x.then(|| Tensor::from_parts_unchecked(input.shape().to_vec(), dx)),
        weight: dw,
        bias: db,
    }
}
