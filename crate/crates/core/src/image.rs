//! RGB raster buffers and their tensor views.

#[cfg(not(feature = "std"))]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Row-major, channel-interleaved RGB image with unit-interval samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ImageBuffer {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(shape_err!("image dimensions must be positive, got {width}x{height}"));
        }
        if pixels.len() != width * height * 3 {
            return Err(shape_err!("{width}x{height} RGB image needs {} samples, got {}", width * height * 3, pixels.len()));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height * 3]).expect("positive dims")
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    pixels.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, pixels).expect("positive dims")
    }

    /// Decodes 8-bit interleaved RGB.
    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    /// Quantizes to 8-bit interleaved RGB, clamping to `[0, 1]` first.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    pub fn clamp_unit(&mut self) {
        self.pixels.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(shape_err!(
                "crop {width}x{height}+{x0}+{y0} outside {}x{} image",
                self.width,
                self.height
            ));
        }
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in y0..y0 + height {
            let start = (y * self.width + x0) * 3;
            pixels.extend_from_slice(&self.pixels[start..start + width * 3]);
        }
        Self::new(width, height, pixels)
    }

    /// Mirror image about the vertical axis.
    pub fn flip_horizontal(&self) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for row in self.pixels.chunks_exact(self.width * 3) {
            for px in row.chunks_exact(3).rev() {
                pixels.extend_from_slice(px);
            }
        }
        Self { width: self.width, height: self.height, pixels }
    }

    /// ITU-R BT.601 luma plane, row-major.
    pub fn luma(&self) -> Vec<f64> {
        self.pixels.chunks_exact(3).map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).collect()
    }
}

/// Interleaved RGB to a planar `[1, 3, h, w]` tensor.
pub fn tensor_from_image<T: Real>(img: &ImageBuffer) -> Tensor<T> {
    let plane = img.width * img.height;
    let mut data = vec![T::zero(); 3 * plane];
    for (i, px) in img.pixels.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + i] = T::from_f64_lossy(px[c]);
        }
    }
    Tensor::from_data(&[1, 3, img.height, img.width], data).expect("image shape")
}

/// Planar `[1, 3, h, w]` tensor to an interleaved image clamped to `[0, 1]`.
pub fn image_from_tensor<T: Real>(t: &Tensor<T>) -> Result<ImageBuffer> {
    let (n, c, h, w) = t.dims4()?;
    if n != 1 || c != 3 {
        return Err(shape_err!("expected a [1, 3, h, w] tensor, got {:?}", t.shape()));
    }
    let plane = h * w;
    let data = t.data();
    let mut pixels = Vec::with_capacity(3 * plane);
    for i in 0..plane {
        for ch in 0..3 {
            pixels.push(data[ch * plane + i].as_f64().clamp(0.0, 1.0));
        }
    }
    ImageBuffer::new(w, h, pixels)
}

/// Splits a `[n, 3, h, w]` batch into per-sample `[1, 3, h, w]` tensors.
pub fn unstack_batch<T: Real>(t: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
    let (n, c, h, w) = t.dims4()?;
    Ok(t.data()
        .chunks_exact(c * h * w)
        .take(n)
        .map(|chunk| Tensor::from_slice(&[1, c, h, w], chunk).expect("sample shape"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb8_round_trip() {
        let bytes: Vec<u8> = (0..12).map(|i| (i * 21) as u8).collect();
        let img = ImageBuffer::from_rgb8(2, 2, &bytes).unwrap();
        assert_eq!(img.to_rgb8(), bytes);
    }

    #[test]
    fn tensor_round_trip_is_exact_in_unit_range() {
        let img = ImageBuffer::from_fn(3, 2, |x, y, c| (x + 3 * y + 7 * c) as f64 / 30.0);
        let t = tensor_from_image::<f64>(&img);
        assert_eq!(t.shape(), &[1, 3, 2, 3]);
        assert_eq!(t.data()[0], img.get(0, 0, 0));
        assert_eq!(t.data()[6], img.get(0, 0, 1));
        assert_eq!(image_from_tensor(&t).unwrap(), img);
    }

    #[test]
    fn conversion_clamps() {
        let t = Tensor::<f32>::from_data(&[1, 3, 1, 1], vec![-0.5, 0.5, 2.0]).unwrap();
        assert_eq!(image_from_tensor(&t).unwrap().pixels(), &[0.0, 0.5, 1.0]);
        assert!(image_from_tensor(&Tensor::<f32>::zeros(&[2, 3, 1, 1])).is_err());
    }

    #[test]
    fn flip_is_involution() {
        let img = ImageBuffer::from_fn(5, 3, |x, y, c| (x * 100 + y * 10 + c) as f64);
        let f = img.flip_horizontal();
        assert_eq!(f.get(0, 1, 2), img.get(4, 1, 2));
        assert_eq!(f.flip_horizontal(), img);
    }

    #[test]
    fn crop_bounds() {
        let img = ImageBuffer::from_fn(4, 4, |x, y, _| (x + 4 * y) as f64);
        let c = img.crop(1, 2, 2, 2).unwrap();
        assert_eq!(c.get(0, 0, 0), 9.0);
        assert!(img.crop(3, 0, 2, 2).is_err());
    }

    #[test]
    fn gray_luma_is_identity() {
        let img = ImageBuffer::filled(2, 2, 0.5);
        assert!(img.luma().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }
}
