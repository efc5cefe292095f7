use alloc::vec;
use alloc::vec::Vec;

use crate::element::Element;
use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// Max pooling. Returns the output and, per output element, the flat input
/// index that won (first maximum in row-major window order). Padding cells
/// never win.
pub fn max_pool2d_forward<T: Element>(
    input: &Tensor<T>,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = input.dims4()?;
    if kernel == 0 || stride == 0 {
        return Err(invalid!("max_pool2d kernel and stride must be positive"));
    }
    if kernel > h + 2 * padding || kernel > w + 2 * padding {
        return Err(invalid!(
            "max_pool2d window {kernel} larger than input {h}x{w}"
        ));
    }
    if padding * 2 > kernel {
        return Err(invalid!(
            "max_pool2d padding {padding} exceeds half the window {kernel}"
        ));
    }
    let oh = (h + 2 * padding - kernel) / stride + 1;
    let ow = (w + 2 * padding - kernel) / stride + 1;
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    let span = |o: usize, len: usize| {
        let start = (o * stride) as isize - padding as isize;
        let lo = start.max(0) as usize;
        let hi = ((start + kernel as isize) as usize).min(len);
        lo..hi
    };
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            let rows = span(oy, h);
            for ox in 0..ow {
                let cols = span(ox, w);
                let mut best = base + rows.start * w + cols.start;
                for y in rows.clone() {
                    for xx in cols.clone() {
                        let idx = base + y * w + xx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::from_parts_unchecked(vec![n, c, oh, ow], out), arg))
}

pub fn max_pool2d_backward<T: Element>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let mut dx = vec![T::zero(); input_shape.iter().product()];
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        dx[i] = dx[i] + g;
    }
    Tensor::from_parts_unchecked(input_shape.to_vec(), dx)
}

/// Bin `[start, end)` of output cell `i` when reducing `len` to `out` cells.
fn bin(i: usize, len: usize, out: usize) -> (usize, usize) {
    (i * len / out, ((i + 1) * len).div_ceil(out))
}

/// Adaptive average pooling to an `out_h x out_w` grid (overlapping bins when the
/// input does not divide evenly).
pub fn adaptive_avg_pool2d_forward<T: Element>(
    input: &Tensor<T>,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4()?;
    if out_h == 0 || out_w == 0 {
        return Err(invalid!(
            "adaptive_avg_pool2d output extents must be positive"
        ));
    }
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * out_h * out_w);
    for plane in 0..n * c {
        let src = &x[plane * h * w..(plane + 1) * h * w];
        for oy in 0..out_h {
            let (y0, y1) = bin(oy, h, out_h);
            for ox in 0..out_w {
                let (x0, x1) = bin(ox, w, out_w);
                let mut acc = 0.0f64;
                for y in y0..y1 {
                    acc += src[y * w + x0..y * w + x1]
                        .iter()
                        .map(|v| v.as_f64())
                        .sum::<f64>();
                }
                out.push(T::from_f64_lossy(acc / ((y1 - y0) * (x1 - x0)) as f64));
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![n, c, out_h, out_w], out))
}

pub fn adaptive_avg_pool2d_backward<T: Element>(
    input_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let (h, w) = (input_shape[2], input_shape[3]);
    let (out_h, out_w) = (grad_out.shape()[2], grad_out.shape()[3]);
    let planes = input_shape[0] * input_shape[1];
    let mut dx = vec![T::zero(); planes * h * w];
    let dy = grad_out.data();
    for plane in 0..planes {
        let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
        for oy in 0..out_h {
            let (y0, y1) = bin(oy, h, out_h);
            for ox in 0..out_w {
                let (x0, x1) = bin(ox, w, out_w);
                let share = dy[(plane * out_h + oy) * out_w + ox]
                    / T::from_usize((y1 - y0) * (x1 - x0)).unwrap();
                for y in y0..y1 {
                    for v in &mut dst[y * w + x0..y * w + x1] {
                        *v = *v + share;
                    }
                }
            }
        }
    }
    Tensor::from_parts_unchecked(input_shape.to_vec(), dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_of_four() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let (y, arg) = max_pool2d_forward(&x, 2, 2, 0).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(arg, vec![3]);
    }

    #[test]
    fn ties_route_to_first_in_scan_order() {
        let x = Tensor::full(&[1, 1, 2, 2], 5.0f32).unwrap();
        let (_, arg) = max_pool2d_forward(&x, 2, 2, 0).unwrap();
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn pooled_shape() {
        let x = Tensor::<f32>::zeros(&[1, 32, 224, 224]).unwrap();
        let (y, _) = max_pool2d_forward(&x, 2, 2, 0).unwrap();
        assert_eq!(y.shape(), &[1, 32, 112, 112]);
        assert!(
            max_pool2d_forward(&Tensor::<f32>::zeros(&[1, 1, 1, 3]).unwrap(), 2, 2, 0).is_err()
        );
    }

    #[test]
    fn padded_window_ignores_padding() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![-1.0f32, -2.0, -3.0, -4.0]).unwrap();
        let (y, arg) = max_pool2d_forward(&x, 3, 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[-1.0]);
        assert_eq!(arg, vec![0]);
        let stem = Tensor::<f32>::zeros(&[1, 1, 112, 112]).unwrap();
        assert_eq!(
            max_pool2d_forward(&stem, 3, 2, 1).unwrap().0.shape(),
            &[1, 1, 56, 56]
        );
    }

    #[test]
    fn global_mean() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(
            adaptive_avg_pool2d_forward(&x, 1, 1).unwrap().data(),
            &[2.5]
        );
        let tail = Tensor::<f32>::zeros(&[1, 256, 14, 14]).unwrap();
        assert_eq!(
            adaptive_avg_pool2d_forward(&tail, 1, 1).unwrap().shape(),
            &[1, 256, 1, 1]
        );
    }

    #[test]
    fn uneven_bins_overlap() {
        assert_eq!(bin(0, 5, 3), (0, 2));
        assert_eq!(bin(1, 5, 3), (1, 4));
        assert_eq!(bin(2, 5, 3), (3, 5));
        assert_eq!(bin(3, 7, 7), (3, 4));
    }
}
