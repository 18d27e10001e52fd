//! Training patch sampling with horizontal-flip augmentation.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{tensor_from_image, ImageBuffer};
use crate::resample::bicubic_resize;
use crate::tensor::Tensor;
use crate::SCALE;

/// One decoded training example: an HR image and, optionally, its LR
/// counterpart at exactly a quarter of the HR size.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub hr: ImageBuffer,
    pub lr: Option<ImageBuffer>,
}

impl ImagePair {
    pub fn synthesized(hr: ImageBuffer) -> Self {
        Self { hr, lr: None }
    }

    /// The LR image, bicubic-downscaled from HR when none was supplied.
    pub fn lr_or_degraded(&self) -> Result<ImageBuffer> {
        match &self.lr {
            Some(lr) => Ok(lr.clone()),
            None => degrade(&self.hr),
        }
    }
}

/// Bicubic 1/4 downscale. Both HR dimensions must be divisible by 4.
pub fn degrade(hr: &ImageBuffer) -> Result<ImageBuffer> {
    if !hr.width().is_multiple_of(SCALE) || !hr.height().is_multiple_of(SCALE) {
        return Err(Error::Domain(format!(
            "{}x{} is not divisible by {SCALE}",
            hr.width(),
            hr.height()
        )));
    }
    bicubic_resize(hr, hr.width() / SCALE, hr.height() / SCALE)
}

/// Aligned LR/HR crops as `[1, 3, h, w]` and `[1, 3, 4h, 4w]` tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub lr: Tensor<f32>,
    pub hr: Tensor<f32>,
    pub entry: usize,
    pub flipped: bool,
}

impl PatchPair {
    /// Both members mirrored, with the flip flag toggled.
    pub fn flipped(&self) -> Self {
        Self {
            lr: flip_tensor_horizontal(&self.lr),
            hr: flip_tensor_horizontal(&self.hr),
            entry: self.entry,
            flipped: !self.flipped,
        }
    }
}

fn flip_tensor_horizontal(t: &Tensor<f32>) -> Tensor<f32> {
    let w = *t.shape().last().expect("non-empty shape");
    let mut data = t.data().to_vec();
    data.chunks_exact_mut(w).for_each(<[f32]>::reverse);
    Tensor::from_data(t.shape(), data).expect("same shape")
}

/// Samples one aligned patch pair from `pair`.
///
/// The HR crop sits at a uniformly drawn offset that is a multiple of 4, the
/// LR patch is the bicubic downscale of that crop (or the aligned crop of a
/// supplied LR image), and both are mirrored together with probability 1/2.
pub fn sample_patch_pair<R: Rng + ?Sized>(pair: &ImagePair, entry: usize, hr_crop: usize, rng: &mut R) -> Result<PatchPair> {
    let fail = |reason: alloc::string::String| Error::Sampling { entry, reason };
    if hr_crop == 0 || !hr_crop.is_multiple_of(SCALE) {
        return Err(fail(format!("crop size {hr_crop} is not a positive multiple of {SCALE}")));
    }
    let (w, h) = (pair.hr.width(), pair.hr.height());
    if w < hr_crop || h < hr_crop {
        return Err(fail(format!("{w}x{h} image is smaller than the {hr_crop}x{hr_crop} crop")));
    }
    let x = rng.random_range(0..=(w - hr_crop) / SCALE) * SCALE;
    let y = rng.random_range(0..=(h - hr_crop) / SCALE) * SCALE;
    let flip = rng.random_bool(0.5);

    let hr = pair.hr.crop(x, y, hr_crop, hr_crop)?;
    let lr_crop = hr_crop / SCALE;
    let lr = match &pair.lr {
        Some(lr) => {
            if lr.width() != w / SCALE || lr.height() != h / SCALE {
                return Err(fail(format!(
                    "LR image is {}x{}, expected {}x{}",
                    lr.width(),
                    lr.height(),
                    w / SCALE,
                    h / SCALE
                )));
            }
            lr.crop(x / SCALE, y / SCALE, lr_crop, lr_crop)?
        }
        None => bicubic_resize(&hr, lr_crop, lr_crop)?,
    };
    let (hr, lr) = if flip { (hr.flip_horizontal(), lr.flip_horizontal()) } else { (hr, lr) };
    Ok(PatchPair { lr: tensor_from_image(&lr), hr: tensor_from_image(&hr), entry, flipped: flip })
}

/// A stacked minibatch of patch pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub lr: Tensor<f32>,
    pub hr: Tensor<f32>,
    pub entries: Vec<usize>,
}

impl Batch {
    pub fn from_pairs(pairs: &[PatchPair]) -> Result<Self> {
        let lr: Vec<&Tensor<f32>> = pairs.iter().map(|p| &p.lr).collect();
        let hr: Vec<&Tensor<f32>> = pairs.iter().map(|p| &p.hr).collect();
        Ok(Self {
            lr: Tensor::stack_batch(&lr)?,
            hr: Tensor::stack_batch(&hr)?,
            entries: pairs.iter().map(|p| p.entry).collect(),
        })
    }
}

/// Draws `size` patch pairs from uniformly chosen images.
pub fn sample_batch<R: Rng + ?Sized>(images: &[ImagePair], size: usize, hr_crop: usize, rng: &mut R) -> Result<Batch> {
    if images.is_empty() {
        return Err(Error::Domain("cannot sample from an empty dataset".into()));
    }
    if size == 0 {
        return Err(Error::Domain("batch size must be positive".into()));
    }
    let pairs = (0..size)
        .map(|_| {
            let entry = rng.random_range(0..images.len());
            sample_patch_pair(&images[entry], entry, hr_crop, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Batch::from_pairs(&pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::rng_for;

    fn pair(w: usize, h: usize) -> ImagePair {
        ImagePair::synthesized(ImageBuffer::from_fn(w, h, |x, y, c| ((x * 13 + y * 7 + c * 3) % 17) as f64 / 16.0))
    }

    #[test]
    fn patch_sizes_follow_scale() {
        let p = sample_patch_pair(&pair(160, 144), 0, 128, &mut rng_for(1, 0)).unwrap();
        assert_eq!(p.lr.shape(), &[1, 3, 32, 32]);
        assert_eq!(p.hr.shape(), &[1, 3, 128, 128]);
    }

    #[test]
    fn sampling_is_seeded() {
        let img = pair(64, 64);
        let a = sample_patch_pair(&img, 3, 32, &mut rng_for(9, 4)).unwrap();
        let b = sample_patch_pair(&img, 3, 32, &mut rng_for(9, 4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.entry, 3);
    }

    #[test]
    fn flip_applies_to_both_and_is_involution() {
        let img = pair(32, 32);
        let mut flipped = None;
        for s in 0..16 {
            let p = sample_patch_pair(&img, 0, 32, &mut rng_for(s, 0)).unwrap();
            if p.flipped {
                flipped = Some(p);
                break;
            }
        }
        let p = flipped.expect("some seed flips");
        let unflipped = p.flipped();
        assert!(!unflipped.flipped);
        // full-image crop: unflipping must give the unaugmented pair
        assert_eq!(unflipped.hr, tensor_from_image(&img.hr));
        assert_eq!(unflipped.lr, tensor_from_image(&degrade(&img.hr).unwrap()));
        assert_eq!(unflipped.flipped(), p);
    }

    #[test]
    fn provided_lr_is_cropped_in_alignment() {
        let hr = ImageBuffer::filled(64, 64, 0.5);
        let lr = ImageBuffer::from_fn(16, 16, |x, y, _| (x + 16 * y) as f64 / 256.0);
        let p = sample_patch_pair(&ImagePair { hr, lr: Some(lr.clone()) }, 0, 32, &mut rng_for(2, 0)).unwrap();
        assert_eq!(p.lr.shape(), &[1, 3, 8, 8]);
        let bad = ImagePair { hr: ImageBuffer::filled(64, 64, 0.5), lr: Some(ImageBuffer::filled(15, 16, 0.0)) };
        assert!(sample_patch_pair(&bad, 0, 32, &mut rng_for(2, 0)).is_err());
    }

    #[test]
    fn too_small_or_misaligned_crop_fails() {
        let err = sample_patch_pair(&pair(60, 128), 7, 64, &mut rng_for(0, 0)).unwrap_err();
        assert!(matches!(err, Error::Sampling { entry: 7, .. }));
        assert!(sample_patch_pair(&pair(64, 64), 0, 30, &mut rng_for(0, 0)).is_err());
    }

    #[test]
    fn batches_stack() {
        let images = [pair(48, 48), pair(64, 40)];
        let b = sample_batch(&images, 3, 16, &mut rng_for(5, 0)).unwrap();
        assert_eq!(b.lr.shape(), &[3, 3, 4, 4]);
        assert_eq!(b.hr.shape(), &[3, 3, 16, 16]);
        assert!(sample_batch(&[], 1, 16, &mut rng_for(5, 0)).is_err());
    }
}
