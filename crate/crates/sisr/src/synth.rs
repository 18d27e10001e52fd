//! Deterministic synthetic texture images for smoke tests and desk
//! benchmarks.
//!
//! Each image mixes a few oriented sinusoidal gratings with hard-edged
//! discs and stripes, so it has both smooth structure an upscaler can learn
//! and sharp edges that pixel replication renders poorly.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::Rng;
use sisr_core::image::ImageBuffer;
use sisr_core::init::rng_for;

use crate::dataset::manifest_text;
use crate::error::{Error, Result};
use crate::io::save_image;

const TEXTURE_STREAM: u64 = 0x7e87;

pub fn texture(seed: u64, index: u64, width: usize, height: usize) -> ImageBuffer {
    let mut rng = rng_for(seed ^ TEXTURE_STREAM, index);
    let gratings: Vec<([f64; 3], f64, f64, f64)> = (0..4)
        .map(|_| {
            let colour = [rng.random_range(-0.25..0.25), rng.random_range(-0.25..0.25), rng.random_range(-0.25..0.25)];
            let angle = rng.random_range(0.0..TAU);
            let freq = rng.random_range(0.01..0.07);
            let phase = rng.random_range(0.0..TAU);
            (colour, angle.cos() * freq * TAU, angle.sin() * freq * TAU, phase)
        })
        .collect();
    let discs: Vec<(f64, f64, f64, [f64; 3])> = (0..3)
        .map(|_| {
            let cx = rng.random_range(0.0..width as f64);
            let cy = rng.random_range(0.0..height as f64);
            let r = rng.random_range(0.08..0.25) * width.min(height) as f64;
            (cx, cy, r, [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)])
        })
        .collect();
    let stripe_period = rng.random_range(6..16) as f64;
    let stripe_colour = [rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15)];
    let base = [rng.random_range(0.35..0.65), rng.random_range(0.35..0.65), rng.random_range(0.35..0.65)];
    ImageBuffer::from_fn(width, height, |x, y, c| {
        let (xf, yf) = (x as f64, y as f64);
        let mut v = base[c];
        for (colour, kx, ky, phase) in &gratings {
            v += colour[c] * (kx * xf + ky * yf + phase).sin();
        }
        for (cx, cy, r, colour) in &discs {
            if (xf - cx).powi(2) + (yf - cy).powi(2) < r * r {
                v += colour[c];
            }
        }
        if ((xf + yf) / stripe_period).floor() as i64 % 2 == 0 {
            v += stripe_colour[c];
        }
        v.clamp(0.0, 1.0)
    })
}

/// Writes `count` textures as `texture_NNN.png` into `dir` together with a
/// `manifest.txt` listing them, and returns the manifest path.
pub fn write_texture_set(dir: &Path, seed: u64, count: usize, width: usize, height: usize) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let name = format!("texture_{i:03}.png");
        save_image(&texture(seed, i as u64, width, height), dir.join(&name))?;
        entries.push((name, None));
    }
    let manifest = dir.join("manifest.txt");
    std::fs::write(&manifest, manifest_text(".", &entries)?).map_err(Error::io(&manifest))?;
    Ok(manifest)
}
