//! Core of a 4x single-image super-resolution engine.
//!
//! Everything in this crate is pure computation over in-memory buffers and
//! builds without `std` (an allocator is required). File formats, image
//! codecs, configuration files and the command-line front end live in the
//! `sisr` crate.
//!
//! The main pieces:
//!
//! * [`tensor`] and [`tape`]: dense NCHW tensors and a Wengert-list tape for
//!   reverse-mode differentiation, generic over `f32` (training) and `f64`
//!   (gradient verification).
//! * [`generator`]: the residual-in-residual dense block network that maps a
//!   `h x w` image to `4h x 4w`.
//! * [`discriminator`]: a strided convolutional critic and the
//!   relativistic-average adversarial losses.
//! * [`perceptual`]: a frozen feature network, feature-space L1 and the
//!   composite generator objective.
//! * [`train`]: Adam, pixel pretraining and adversarial fine-tuning steps.
//! * [`image`], [`resample`], [`patch`], [`manifest`]: raster buffers, cubic
//!   resampling, patch sampling with flips, and dataset manifests.
//! * [`metrics`]: PSNR, SSIM and report tables.
//! * [`archive`]: the SRWT named-tensor binary format.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod archive;
pub mod discriminator;
pub mod error;
pub mod generator;
pub mod gradcheck;
pub mod image;
pub mod init;
pub mod manifest;
pub mod metrics;
pub mod params;
pub mod patch;
pub mod perceptual;
pub mod real;
pub mod resample;
pub mod tape;
pub mod tensor;
pub mod train;

mod conv;

pub use error::{Error, Result};
pub use params::Params;
pub use real::Real;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

/// Fixed LR to HR scale factor.
pub const SCALE: usize = 4;
