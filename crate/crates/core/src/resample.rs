//! Separable cubic-convolution resampling.
//!
//! Output pixel centers map to source coordinates with the half-pixel
//! convention `src = (dst + 0.5) * in / out - 0.5`. Each output sample takes
//! the four nearest source samples along each axis, clamping indices at the
//! borders, and the weights are renormalized to sum to one.

#[cfg(not(feature = "std"))]
use num_traits::Float;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::image::ImageBuffer;

/// Coefficient of the cubic-convolution kernel family used for degradation.
pub const CUBIC_A: f64 = -0.5;

/// Cubic-convolution kernel with free parameter `a` (`a < 0`).
pub fn cubic_kernel_weight(x: f64, a: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// The four tap weights for a sample at fractional offset `phase` past the
/// second tap, i.e. for taps at distances `1 + phase, phase, 1 - phase,
/// 2 - phase`.
pub fn cubic_taps(phase: f64, a: f64) -> [f64; 4] {
    [
        cubic_kernel_weight(1.0 + phase, a),
        cubic_kernel_weight(phase, a),
        cubic_kernel_weight(1.0 - phase, a),
        cubic_kernel_weight(2.0 - phase, a),
    ]
}

struct AxisTaps {
    index: Vec<[usize; 4]>,
    weight: Vec<[f64; 4]>,
}

fn axis_taps(input: usize, output: usize) -> AxisTaps {
    let ratio = input as f64 / output as f64;
    let mut index = Vec::with_capacity(output);
    let mut weight = Vec::with_capacity(output);
    let last = input as isize - 1;
    for o in 0..output {
        let src = (o as f64 + 0.5) * ratio - 0.5;
        let base = src.floor();
        let phase = src - base;
        let base = base as isize;
        let mut w = cubic_taps(phase, CUBIC_A);
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        let idx = [-1isize, 0, 1, 2].map(|d| (base + d).clamp(0, last) as usize);
        index.push(idx);
        weight.push(w);
    }
    AxisTaps { index, weight }
}

/// Resizes with the `a = -0.5` cubic kernel; output is clamped to `[0, 1]`.
pub fn bicubic_resize(img: &ImageBuffer, out_w: usize, out_h: usize) -> Result<ImageBuffer> {
    if out_w == 0 || out_h == 0 {
        return Err(shape_err!("resize target must be at least 1x1, got {out_w}x{out_h}"));
    }
    let (w, h) = (img.width(), img.height());
    let src = img.pixels();

    let horiz = axis_taps(w, out_w);
    let mut tmp = Vec::with_capacity(out_w * h * 3);
    for y in 0..h {
        let row = &src[y * w * 3..(y + 1) * w * 3];
        for (idx, wt) in horiz.index.iter().zip(&horiz.weight) {
            for c in 0..3 {
                tmp.push((0..4).map(|t| wt[t] * row[idx[t] * 3 + c]).sum::<f64>());
            }
        }
    }

    let vert = axis_taps(h, out_h);
    let mut out = Vec::with_capacity(out_w * out_h * 3);
    for (idx, wt) in vert.index.iter().zip(&vert.weight) {
        for x in 0..out_w * 3 {
            let v: f64 = (0..4).map(|t| wt[t] * tmp[idx[t] * out_w * 3 + x]).sum();
            out.push(v.clamp(0.0, 1.0));
        }
    }
    ImageBuffer::new(out_w, out_h, out)
}

/// Integer-factor pixel replication.
pub fn nearest_upscale(img: &ImageBuffer, factor: usize) -> Result<ImageBuffer> {
    if factor == 0 {
        return Err(shape_err!("upscale factor must be positive"));
    }
    Ok(ImageBuffer::from_fn(img.width() * factor, img.height() * factor, |x, y, c| {
        img.get(x / factor, y / factor, c)
    }))
}
