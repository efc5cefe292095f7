//! Synthetic three-class dataset: a colored shape on a noisy gray background.
//! Color and shape both identify the class.

use std::path::Path;

use cnnkit_core::image::Image;
use cnnkit_core::rng::{domain, stream};
use rand::Rng;

use crate::error::Result;
use crate::fsutil::create_dir;
use crate::ppm;

pub const CLASSES: [&str; 3] = ["red_disc", "green_square", "blue_triangle"];

const COLORS: [[f32; 3]; 3] = [[0.85, 0.15, 0.15], [0.15, 0.8, 0.2], [0.15, 0.25, 0.9]];

fn inside(class: usize, dy: f32, dx: f32, r: f32) -> bool {
    match class {
        0 => dx * dx + dy * dy <= r * r,
        1 => dx.abs() <= r && dy.abs() <= r,
        // Upward triangle with apex at -r and base at +r.
        _ => dy >= -r && dy <= r && dx.abs() <= (dy + r) / 2.0,
    }
}

/// One `size`×`size` image of `class`; drawn from stream
/// `(seed, SYNTHETIC, class, index)`.
pub fn synth_image(class: usize, index: usize, size: usize, seed: u64) -> Image {
    let mut rng = stream(seed, &[domain::SYNTHETIC, class as u64, index as u64]);
    let s = size as f32;
    let base: f32 = rng.random_range(0.25..0.6);
    let r = s * rng.random_range(0.18..0.32);
    let cy = rng.random_range(r..s - r);
    let cx = rng.random_range(r..s - r);
    let mut color = COLORS[class];
    for c in &mut color {
        *c = (*c + rng.random_range(-0.08..0.08)).clamp(0.0, 1.0);
    }
    let noise: Vec<f32> = (0..size * size)
        .map(|_| rng.random_range(-0.08..0.08))
        .collect();
    Image::from_fn(size, size, |y, x| {
        let n = noise[y * size + x];
        if inside(class, y as f32 + 0.5 - cy, x as f32 + 0.5 - cx, r) {
            color.map(|c| (c + n).clamp(0.0, 1.0))
        } else {
            [(base + n).clamp(0.0, 1.0); 3]
        }
    })
    .expect("non-empty image")
}

/// Writes `per_class` PPM images per class into `out/<class>/`.
pub fn generate(out: &Path, per_class: usize, size: usize, seed: u64) -> Result<()> {
    for (class, name) in CLASSES.iter().enumerate() {
        let dir = out.join(name);
        create_dir(&dir)?;
        for i in 0..per_class {
            ppm::write(
                &dir.join(format!("{name}_{i:04}.ppm")),
                &synth_image(class, i, size, seed),
            )?;
        }
    }
    Ok(())
}
