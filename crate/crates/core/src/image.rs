//! Interleaved RGB images in [0, 1], bilinear resizing and channel-first
//! normalization.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

pub const CHANNELS: usize = 3;
pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// H×W×3 pixels, row-major with interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid!(
                "image extents must be positive, got {height}x{width}"
            ));
        }
        if data.len() != height * width * CHANNELS {
            return Err(invalid!(
                "{}x{}x3 image needs {} values, got {}",
                height,
                width,
                height * width * CHANNELS,
                data.len()
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self> {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Self::new(height, width, data)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * CHANNELS;
        self.data[i..i + CHANNELS].copy_from_slice(&rgb);
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Copies the `h`×`w` window whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 || top + h > self.height || left + w > self.width {
            return Err(invalid!(
                "crop {h}x{w} at ({top}, {left}) exceeds {}x{} image",
                self.height,
                self.width
            ));
        }
        let mut data = Vec::with_capacity(h * w * CHANNELS);
        for y in top..top + h {
            let start = (y * self.width + left) * CHANNELS;
            data.extend_from_slice(&self.data[start..start + w * CHANNELS]);
        }
        Ok(Self {
            height: h,
            width: w,
            data,
        })
    }
}

/// Source coordinate and blend weight for one output index.
fn sample_axis(out_len: usize, in_len: usize) -> Vec<(usize, usize, f32)> {
    let scale = in_len as f64 / out_len as f64;
    let last = (in_len - 1) as f64;
    (0..out_len)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, (src - i0 as f64) as f32)
        })
        .collect()
}

/// Bilinear resampling with half-pixel centres: output index `d` reads source
/// coordinate `(d + 0.5) * in / out - 0.5`, clamped to the border.
pub fn resize_bilinear(img: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(invalid!(
            "resize target must be positive, got {out_h}x{out_w}"
        ));
    }
    if out_h == img.height && out_w == img.width {
        return Ok(img.clone());
    }
    let rows = sample_axis(out_h, img.height);
    let cols = sample_axis(out_w, img.width);
    let mut data = vec![0.0f32; out_h * out_w * CHANNELS];
    for (oy, &(y0, y1, fy)) in rows.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in cols.iter().enumerate() {
            let (a, b, c, d) = (
                img.pixel(y0, x0),
                img.pixel(y0, x1),
                img.pixel(y1, x0),
                img.pixel(y1, x1),
            );
            let o = (oy * out_w + ox) * CHANNELS;
            for ch in 0..CHANNELS {
                let top = a[ch] + (b[ch] - a[ch]) * fx;
                let bottom = c[ch] + (d[ch] - c[ch]) * fx;
                data[o + ch] = top + (bottom - top) * fy;
            }
        }
    }
    Ok(Image {
        height: out_h,
        width: out_w,
        data,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeMode {
    /// Values stay in [0, 1]; only the layout changes.
    #[default]
    Unit,
    /// Per-channel `(x - mean) / std` with the ImageNet constants.
    Imagenet,
}

impl NormalizeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Unit => "unit",
            Self::Imagenet => "imagenet",
        }
    }

    /// Closed interval containing every normalized value of channel `c`.
    pub fn range(self, c: usize) -> (f32, f32) {
        match self {
            Self::Unit => (0.0, 1.0),
            Self::Imagenet => (
                -IMAGENET_MEAN[c] / IMAGENET_STD[c],
                (1.0 - IMAGENET_MEAN[c]) / IMAGENET_STD[c],
            ),
        }
    }
}

impl fmt::Display for NormalizeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormalizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(Self::Unit),
            "imagenet" => Ok(Self::Imagenet),
            _ => Err(invalid!(
                "unknown normalization {s:?}; expected one of: unit, imagenet"
            )),
        }
    }
}

/// Reorders to a 3×H×W tensor and applies `mode`.
pub fn normalize(img: &Image, mode: NormalizeMode) -> Tensor<f32> {
    let mut out = Vec::with_capacity(img.data.len());
    normalize_into(img, mode, &mut out);
    Tensor::from_parts_unchecked(vec![CHANNELS, img.height, img.width], out)
}

/// Appends the channel-first normalized values of `img` to `out`.
pub fn normalize_into(img: &Image, mode: NormalizeMode, out: &mut Vec<f32>) {
    for c in 0..CHANNELS {
        let (mean, std) = match mode {
            NormalizeMode::Unit => (0.0, 1.0),
            NormalizeMode::Imagenet => (IMAGENET_MEAN[c], IMAGENET_STD[c]),
        };
        out.extend(img.data.chunks_exact(CHANNELS).map(|px| match mode {
            NormalizeMode::Unit => px[c],
            NormalizeMode::Imagenet => (px[c] - mean) / std,
        }));
    }
}
