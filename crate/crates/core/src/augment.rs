//! Training-time image transforms and the per-dataset augmentation profiles.
//!
//! Each stochastic transform has a deterministic counterpart taking explicit
//! parameters (`flip_horizontal`, `rotate_by`, `jitter_with`, `crop_geometry`),
//! which the sampling wrappers call after drawing from the generator.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{normalize, resize_bilinear, Image, NormalizeMode, CHANNELS};
use crate::tensor::Tensor;

pub const GRAY_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];
pub const CROP_ATTEMPTS: usize = 10;
pub const DEFAULT_RATIO: (f64, f64) = (3.0 / 4.0, 4.0 / 3.0);

/// Mirrors columns.
pub fn flip_horizontal(img: &Image) -> Image {
    let (h, w) = (img.height(), img.width());
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            out.set_pixel(y, x, img.pixel(y, w - 1 - x));
        }
    }
    out
}

/// Mirrors columns with probability `p`.
pub fn horizontal_flip<R: Rng + ?Sized>(img: &Image, p: f64, rng: &mut R) -> Result<Image> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid!("flip probability must lie in [0, 1], got {p}"));
    }
    Ok(if rng.random::<f64>() < p {
        flip_horizontal(img)
    } else {
        img.clone()
    })
}

fn snap(v: f64) -> f64 {
    const EPS: f64 = 1e-12;
    if v.abs() < EPS {
        0.0
    } else if (v - 1.0).abs() < EPS {
        1.0
    } else if (v + 1.0).abs() < EPS {
        -1.0
    } else {
        v
    }
}

/// Rotates counter-clockwise by `degrees` about the image centre with
/// bilinear sampling; source positions outside the image read as 0.
pub fn rotate_by(img: &Image, degrees: f64) -> Image {
    let (h, w) = (img.height(), img.width());
    let theta = degrees * PI / 180.0;
    let (sin, cos) = (snap(theta.sin()), snap(theta.cos()));
    if sin == 0.0 && cos == 1.0 {
        return img.clone();
    }
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let read = |y: isize, x: isize| -> [f32; 3] {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            [0.0; 3]
        } else {
            img.pixel(y as usize, x as usize)
        }
    };
    let mut data = vec![0.0f32; h * w * CHANNELS];
    for y in 0..h {
        for x in 0..w {
            // Inverse map: rotate the output offset by -theta (image rows grow downward).
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            if sx <= -1.0 || sy <= -1.0 || sx >= w as f64 || sy >= h as f64 {
                continue;
            }
            let (fx0, fy0) = (sx.floor(), sy.floor());
            let (fx, fy) = ((sx - fx0) as f32, (sy - fy0) as f32);
            let (x0, y0) = (fx0 as isize, fy0 as isize);
            let (a, b, c, d) = (
                read(y0, x0),
                read(y0, x0 + 1),
                read(y0 + 1, x0),
                read(y0 + 1, x0 + 1),
            );
            let o = (y * w + x) * CHANNELS;
            for ch in 0..CHANNELS {
                let top = a[ch] * (1.0 - fx) + b[ch] * fx;
                let bottom = c[ch] * (1.0 - fx) + d[ch] * fx;
                data[o + ch] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Image::new(h, w, data).expect("same extents")
}

/// Rotates by an angle drawn uniformly from `[-max_deg, max_deg]`.
pub fn rotate<R: Rng + ?Sized>(img: &Image, max_deg: f64, rng: &mut R) -> Result<Image> {
    if !(max_deg >= 0.0 && max_deg.is_finite()) {
        return Err(invalid!(
            "rotation range must be non-negative, got {max_deg}"
        ));
    }
    if max_deg == 0.0 {
        return Ok(img.clone());
    }
    Ok(rotate_by(img, rng.random_range(-max_deg..=max_deg)))
}

fn gray(px: &[f32]) -> f32 {
    GRAY_WEIGHTS[0] * px[0] + GRAY_WEIGHTS[1] * px[1] + GRAY_WEIGHTS[2] * px[2]
}

/// Brightness, then contrast, then saturation, clamping to [0, 1] after each.
pub fn jitter_with(img: &Image, brightness: f32, contrast: f32, saturation: f32) -> Image {
    let mut out = img.clone();
    let data = out.data_mut();
    if brightness != 1.0 {
        data.iter_mut()
            .for_each(|v| *v = (*v * brightness).clamp(0.0, 1.0));
    }
    if contrast != 1.0 {
        let pixels = data.len() / CHANNELS;
        let mean = (data
            .chunks_exact(CHANNELS)
            .map(|p| f64::from(gray(p)))
            .sum::<f64>()
            / pixels as f64) as f32;
        data.iter_mut()
            .for_each(|v| *v = (mean + (*v - mean) * contrast).clamp(0.0, 1.0));
    }
    if saturation != 1.0 {
        for px in data.chunks_exact_mut(CHANNELS) {
            let g = gray(px);
            px.iter_mut()
                .for_each(|v| *v = (g + (*v - g) * saturation).clamp(0.0, 1.0));
        }
    }
    out
}

/// Draws brightness, contrast and saturation factors from `[1-m, 1+m]`.
pub fn color_jitter<R: Rng + ?Sized>(img: &Image, magnitude: f64, rng: &mut R) -> Result<Image> {
    if !(0.0..1.0).contains(&magnitude) {
        return Err(invalid!(
            "jitter magnitude must lie in [0, 1), got {magnitude}"
        ));
    }
    if magnitude == 0.0 {
        return Ok(img.clone());
    }
    let mut factor = || rng.random_range(1.0 - magnitude..=1.0 + magnitude) as f32;
    let (b, c, s) = (factor(), factor(), factor());
    Ok(jitter_with(img, b, c, s))
}

/// Crop extents `(h, w)` for an area fraction and aspect ratio (w/h), or
/// `None` when they do not fit inside an `img_h`×`img_w` image.
pub fn crop_geometry(
    img_h: usize,
    img_w: usize,
    area_fraction: f64,
    aspect: f64,
) -> Option<(usize, usize)> {
    let target = area_fraction * (img_h * img_w) as f64;
    let w = (target * aspect).sqrt().round() as usize;
    let h = (target / aspect).sqrt().round() as usize;
    (w > 0 && h > 0 && w <= img_w && h <= img_h).then_some((h, w))
}

/// Largest centred window whose aspect lies within `ratio`.
pub fn center_crop_geometry(img_h: usize, img_w: usize, ratio: (f64, f64)) -> (usize, usize) {
    let in_ratio = img_w as f64 / img_h as f64;
    if in_ratio < ratio.0 {
        (
            ((img_w as f64 / ratio.0).round() as usize).clamp(1, img_h),
            img_w,
        )
    } else if in_ratio > ratio.1 {
        (
            img_h,
            ((img_h as f64 * ratio.1).round() as usize).clamp(1, img_w),
        )
    } else {
        (img_h, img_w)
    }
}

/// Window `(top, left, h, w)` chosen by the random-resized-crop rule.
pub fn sample_crop<R: Rng + ?Sized>(
    img_h: usize,
    img_w: usize,
    scale: (f64, f64),
    ratio: (f64, f64),
    rng: &mut R,
) -> Result<(usize, usize, usize, usize)> {
    if !(scale.0 > 0.0 && scale.0 <= scale.1 && scale.1 <= 1.0) {
        return Err(invalid!(
            "crop scale must satisfy 0 < lo <= hi <= 1, got [{}, {}]",
            scale.0,
            scale.1
        ));
    }
    if !(ratio.0 > 0.0 && ratio.0 <= ratio.1) {
        return Err(invalid!(
            "crop ratio must satisfy 0 < lo <= hi, got [{}, {}]",
            ratio.0,
            ratio.1
        ));
    }
    let (log_lo, log_hi) = (ratio.0.ln(), ratio.1.ln());
    for _ in 0..CROP_ATTEMPTS {
        let area = rng.random_range(scale.0..=scale.1);
        let aspect = rng.random_range(log_lo..=log_hi).exp();
        if let Some((h, w)) = crop_geometry(img_h, img_w, area, aspect) {
            let top = rng.random_range(0..=img_h - h);
            let left = rng.random_range(0..=img_w - w);
            return Ok((top, left, h, w));
        }
    }
    let (h, w) = center_crop_geometry(img_h, img_w, ratio);
    Ok(((img_h - h) / 2, (img_w - w) / 2, h, w))
}

/// Random crop resized to `out`×`out`.
pub fn random_resized_crop<R: Rng + ?Sized>(
    img: &Image,
    scale: (f64, f64),
    ratio: (f64, f64),
    out: usize,
    rng: &mut R,
) -> Result<Image> {
    let (top, left, h, w) = sample_crop(img.height(), img.width(), scale, ratio, rng)?;
    resize_bilinear(&img.crop(top, left, h, w)?, out, out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Transform {
    RandomResizedCrop {
        scale_min: f64,
        scale_max: f64,
        ratio_min: f64,
        ratio_max: f64,
    },
    HorizontalFlip {
        p: f64,
    },
    Rotate {
        max_deg: f64,
    },
    ColorJitter {
        magnitude: f64,
    },
}

impl Transform {
    fn apply<R: Rng + ?Sized>(&self, img: &Image, out_size: usize, rng: &mut R) -> Result<Image> {
        match *self {
            Self::RandomResizedCrop {
                scale_min,
                scale_max,
                ratio_min,
                ratio_max,
            } => random_resized_crop(
                img,
                (scale_min, scale_max),
                (ratio_min, ratio_max),
                out_size,
                rng,
            ),
            Self::HorizontalFlip { p } => horizontal_flip(img, p, rng),
            Self::Rotate { max_deg } => rotate(img, max_deg, rng),
            Self::ColorJitter { magnitude } => color_jitter(img, magnitude, rng),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    Paddy,
    Footpath,
    Mango,
    Rickshaw,
    Roads,
    #[default]
    None,
}

impl ProfileName {
    pub const ALL: [ProfileName; 6] = [
        Self::Paddy,
        Self::Footpath,
        Self::Mango,
        Self::Rickshaw,
        Self::Roads,
        Self::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Paddy => "paddy",
            Self::Footpath => "footpath",
            Self::Mango => "mango",
            Self::Rickshaw => "rickshaw",
            Self::Roads => "roads",
            Self::None => "none",
        }
    }

    pub fn profile(self) -> AugmentProfile {
        use Transform::*;
        let flip = HorizontalFlip { p: 0.5 };
        let ops = match self {
            Self::Paddy => vec![
                RandomResizedCrop {
                    scale_min: 0.8,
                    scale_max: 1.0,
                    ratio_min: DEFAULT_RATIO.0,
                    ratio_max: DEFAULT_RATIO.1,
                },
                flip,
                Rotate { max_deg: 10.0 },
                ColorJitter { magnitude: 0.3 },
            ],
            Self::Footpath => vec![
                flip,
                Rotate { max_deg: 8.0 },
                ColorJitter { magnitude: 0.2 },
            ],
            Self::Mango => vec![flip],
            Self::Rickshaw | Self::Roads => vec![
                flip,
                Rotate { max_deg: 10.0 },
                ColorJitter { magnitude: 0.2 },
            ],
            Self::None => Vec::new(),
        };
        AugmentProfile { name: self, ops }
    }
}

impl fmt::Display for ProfileName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProfileName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| {
            invalid!("unknown augmentation profile {s:?}; expected one of: paddy, footpath, mango, rickshaw, roads, none")
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Val,
}

/// Named, ordered list of stochastic transforms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentProfile {
    pub name: ProfileName,
    pub ops: Vec<Transform>,
}

impl AugmentProfile {
    pub fn validate(&self) -> Result<()> {
        for op in &self.ops {
            let ok = match *op {
                Transform::RandomResizedCrop {
                    scale_min,
                    scale_max,
                    ratio_min,
                    ratio_max,
                } => {
                    scale_min > 0.0
                        && scale_min <= scale_max
                        && scale_max <= 1.0
                        && ratio_min > 0.0
                        && ratio_min <= ratio_max
                }
                Transform::HorizontalFlip { p } => (0.0..=1.0).contains(&p),
                Transform::Rotate { max_deg } => max_deg >= 0.0 && max_deg.is_finite(),
                Transform::ColorJitter { magnitude } => (0.0..1.0).contains(&magnitude),
            };
            if !ok {
                return Err(invalid!(
                    "invalid transform in profile {}: {op:?}",
                    self.name
                ));
            }
        }
        Ok(())
    }

    /// Augments (train phase only), resizes to `out_size`×`out_size` and
    /// normalizes into a 3×H×W tensor.
    pub fn apply<R: Rng + ?Sized>(
        &self,
        img: &Image,
        phase: Phase,
        out_size: usize,
        mode: NormalizeMode,
        rng: &mut R,
    ) -> Result<Tensor<f32>> {
        Ok(normalize(&self.augment(img, phase, out_size, rng)?, mode))
    }

    /// Like [`apply`](Self::apply) without the final normalization.
    pub fn augment<R: Rng + ?Sized>(
        &self,
        img: &Image,
        phase: Phase,
        out_size: usize,
        rng: &mut R,
    ) -> Result<Image> {
        let mut cur = img.clone();
        if phase == Phase::Train {
            for op in &self.ops {
                cur = op.apply(&cur, out_size, rng)?;
            }
        }
        if cur.height() != out_size || cur.width() != out_size {
            cur = resize_bilinear(&cur, out_size, out_size)?;
        }
        Ok(cur)
    }
}

/// Convenience wrapper over [`AugmentProfile::apply`].
pub fn apply_profile<R: Rng + ?Sized>(
    img: &Image,
    profile: &AugmentProfile,
    rng: &mut R,
    phase: Phase,
    out_size: usize,
    mode: NormalizeMode,
) -> Result<Tensor<f32>> {
    profile.apply(img, phase, out_size, mode, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn grid(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |y, x| {
            [
                (y * w + x) as f32 / (h * w) as f32,
                0.5,
                1.0 - (x as f32 / w as f32),
            ]
        })
        .unwrap()
    }

    #[test]
    fn flip_is_involution() {
        let img = grid(3, 5);
        assert_eq!(flip_horizontal(&flip_horizontal(&img)), img);
        let row = Image::from_fn(1, 2, |_, x| [x as f32; 3]).unwrap();
        assert_eq!(flip_horizontal(&row).pixel(0, 0), [1.0; 3]);
    }

    #[test]
    fn half_turn_is_point_symmetry() {
        let img = Image::from_fn(2, 2, |y, x| [(y * 2 + x) as f32 / 4.0; 3]).unwrap();
        let r = rotate_by(&img, 180.0);
        assert_eq!(r.pixel(0, 0), img.pixel(1, 1));
        assert_eq!(r.pixel(0, 1), img.pixel(1, 0));
        assert_eq!(r.pixel(1, 0), img.pixel(0, 1));
        assert_eq!(r.pixel(1, 1), img.pixel(0, 0));
        assert_eq!(rotate_by(&grid(4, 6), 0.0), grid(4, 6));
    }

    #[test]
    fn rotated_constant_keeps_interior_and_zero_corners() {
        let img = Image::filled(21, 21, [0.7; 3]).unwrap();
        let r = rotate_by(&img, 30.0);
        assert!((r.pixel(10, 10)[0] - 0.7).abs() < 1e-6);
        assert!((r.pixel(8, 12)[1] - 0.7).abs() < 1e-6);
        assert_eq!(r.pixel(0, 0), [0.0; 3]);
        assert_eq!(r.pixel(20, 20), [0.0; 3]);
    }

    #[test]
    fn jitter_cases() {
        let img = Image::filled(1, 2, [0.5; 3]).unwrap();
        assert!((jitter_with(&img, 1.3, 1.0, 1.0).pixel(0, 0)[0] - 0.65).abs() < 1e-6);
        let bright = Image::filled(1, 1, [0.9; 3]).unwrap();
        assert_eq!(jitter_with(&bright, 1.3, 1.0, 1.0).pixel(0, 0), [1.0; 3]);
        let color = grid(2, 3);
        let gray = jitter_with(&color, 1.0, 1.0, 0.0);
        for y in 0..2 {
            for x in 0..3 {
                let g = super::gray(&color.pixel(y, x));
                assert!(gray.pixel(y, x).iter().all(|&v| (v - g).abs() < 1e-6));
            }
        }
        let mut rng = stream(1, &[0]);
        assert_eq!(color_jitter(&color, 0.0, &mut rng).unwrap(), color);
    }

    #[test]
    fn crop_geometry_cases() {
        assert_eq!(crop_geometry(100, 100, 0.8, 1.0), Some((89, 89)));
        assert_eq!(crop_geometry(10, 10, 1.0, 2.0), None);
        assert_eq!(center_crop_geometry(100, 300, DEFAULT_RATIO), (100, 133));
        let mut rng = stream(3, &[0]);
        let (t, l, h, w) = sample_crop(50, 50, (1.0, 1.0), (1.0, 1.0), &mut rng).unwrap();
        assert_eq!((t, l, h, w), (0, 0, 50, 50));
    }

    #[test]
    fn profiles_round_trip_and_validate() {
        for name in ProfileName::ALL {
            let p = name.profile();
            p.validate().unwrap();
            assert_eq!(name.as_str().parse::<ProfileName>().unwrap(), name);
        }
        assert_eq!(ProfileName::Mango.profile().ops.len(), 1);
        assert_eq!(ProfileName::None.profile().ops.len(), 0);
        assert!("hue".parse::<ProfileName>().is_err());
    }

    #[test]
    fn val_phase_is_resize_and_normalize() {
        let img = grid(30, 20);
        let mut rng = stream(9, &[0]);
        let a = ProfileName::Paddy
            .profile()
            .apply(&img, Phase::Val, 16, NormalizeMode::Imagenet, &mut rng)
            .unwrap();
        let b = normalize(
            &resize_bilinear(&img, 16, 16).unwrap(),
            NormalizeMode::Imagenet,
        );
        assert_eq!(a, b);
    }
}
