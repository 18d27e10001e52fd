//! Frozen feature network, feature-space and pixel L1 losses, and the
//! composite generator objective `percep + λ·adv + η·l1`.
//!
//! The feature network is a plain stack of 3x3 convolutions with ReLU and
//! 2x2 average pooling at configurable positions. Its weights are either
//! drawn from a fixed seed or loaded from an archive, and are never trained.
//! Features are read at `tap_layer` *before* that layer's activation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::discriminator::relativistic_g_loss;
use crate::error::{shape_err, Error, Result};
use crate::init::{conv_kernel, rng_for};
use crate::params::{Bound, Params};
use crate::real::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

const FEATURE_STREAM: u64 = 0x00fe_a70e;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields, default))]
pub struct FeatureNetSpec {
    /// Output channels of each convolution.
    pub channels: Vec<usize>,
    /// Layers followed (after activation) by 2x2 average pooling.
    pub downsample_after: Vec<usize>,
    /// Layer whose pre-activation output is the feature map.
    pub tap_layer: usize,
    pub seed: u64,
}

impl Default for FeatureNetSpec {
    fn default() -> Self {
        Self { channels: vec![16, 16, 32, 32, 64], downsample_after: vec![1, 3], tap_layer: 4, seed: 19 }
    }
}

impl FeatureNetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Config(format!("feature channels must be non-empty and positive: {:?}", self.channels)));
        }
        if self.tap_layer >= self.channels.len() {
            return Err(Error::Config(format!(
                "tap_layer {} out of range for {} layers",
                self.tap_layer,
                self.channels.len()
            )));
        }
        Ok(())
    }

    /// Spatial reduction factor between the input and the tapped features.
    pub fn downsample_factor(&self) -> usize {
        let pools = self.downsample_after.iter().filter(|&&l| l < self.tap_layer).count();
        1 << pools
    }

    pub fn schema(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut cin = 3;
        for (i, &c) in self.channels.iter().enumerate().take(self.tap_layer + 1) {
            out.push((format!("conv{i}.weight"), vec![c, cin, 3, 3]));
            out.push((format!("conv{i}.bias"), vec![c]));
            cin = c;
        }
        out.sort();
        out
    }
}

/// The frozen feature extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNet<T = f32> {
    pub spec: FeatureNetSpec,
    pub params: Params<T>,
}

impl FeatureNet<f32> {
    /// Weights drawn deterministically from `spec.seed`.
    pub fn from_seed(spec: FeatureNetSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_for(spec.seed, FEATURE_STREAM);
        let mut params = Params::new();
        for (name, shape) in spec.schema() {
            let t = if name.ends_with(".weight") {
                conv_kernel(&mut rng, shape[0], shape[1], shape[2], shape[3], 1.0)
            } else {
                Tensor::zeros(&shape)
            };
            params.insert(name, t);
        }
        Ok(Self { spec, params })
    }
}

impl<T: Real> FeatureNet<T> {
    /// Externally supplied weights; they must match the `FeatureNetSpec` schema.
    pub fn from_params(spec: FeatureNetSpec, params: Params<T>) -> Result<Self> {
        spec.validate()?;
        params.check_schema(&spec.schema())?;
        Ok(Self { spec, params })
    }

    pub fn cast<U: Real>(&self) -> FeatureNet<U> {
        FeatureNet { spec: self.spec.clone(), params: self.params.cast() }
    }

    /// Binds the weights as constants: gradients never reach them.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        self.params.bind(tape, false)
    }
}

/// Pre-activation feature map of `x` at `spec.tap_layer`.
pub fn feature_extract<T: Real>(tape: &mut Tape<T>, x: Var, w: &Bound, spec: &FeatureNetSpec) -> Result<Var> {
    let (_, _, h, wd) = tape.value(x).dims4()?;
    let factor = spec.downsample_factor();
    if h < factor || wd < factor {
        return Err(shape_err!("{h}x{wd} input is too small for a feature tap downsampled {factor}x"));
    }
    let mut h = x;
    for i in 0..=spec.tap_layer {
        let kernel = w.var(&format!("conv{i}.weight"))?;
        let bias = w.var(&format!("conv{i}.bias"))?;
        h = tape.conv2d(h, kernel, Some(bias), 1, 1)?;
        if i == spec.tap_layer {
            break;
        }
        h = tape.relu(h)?;
        if spec.downsample_after.contains(&i) {
            h = tape.avg_pool2x2(h)?;
        }
    }
    Ok(h)
}

/// Mean absolute difference between the features of `sr` and `hr`.
pub fn perceptual_loss<T: Real>(tape: &mut Tape<T>, sr: Var, hr: Var, w: &Bound, spec: &FeatureNetSpec) -> Result<Var> {
    if tape.value(sr).shape() != tape.value(hr).shape() {
        return Err(shape_err!(
            "perceptual loss: {:?} vs {:?}",
            tape.value(sr).shape(),
            tape.value(hr).shape()
        ));
    }
    let fs = feature_extract(tape, sr, w, spec)?;
    let fh = feature_extract(tape, hr, w, spec)?;
    pixel_l1(tape, fs, fh)
}

/// Mean of `|sr − hr|` over every element.
pub fn pixel_l1<T: Real>(tape: &mut Tape<T>, sr: Var, hr: Var) -> Result<Var> {
    let d = tape.sub(sr, hr)?;
    let a = tape.abs(d);
    tape.mean(a)
}

/// Weights of the adversarial (λ) and pixel (η) terms.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields, default))]
pub struct LossWeights {
    pub lambda: f64,
    pub eta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda: 0.005, eta: 0.01 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("eta", self.eta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// `percep + λ·adv + η·l1` on plain numbers.
    pub fn combine(&self, percep: f64, adv: f64, l1: f64) -> f64 {
        percep + self.lambda * adv + self.eta * l1
    }

    /// The same sum in `f32`, rounded exactly as the training tape rounds it.
    pub fn combine_f32(&self, percep: f32, adv: f32, l1: f32) -> f32 {
        (percep + adv * self.lambda as f32) + l1 * self.eta as f32
    }
}

/// Tape handles of the composite objective and its parts.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorLoss {
    pub total: Var,
    pub percep: Var,
    pub adv: Var,
    pub l1: Var,
}

#[allow(clippy::too_many_arguments)]
pub fn total_generator_loss<T: Real>(
    tape: &mut Tape<T>,
    sr: Var,
    hr: Var,
    real_logits: Var,
    fake_logits: Var,
    features: &Bound,
    spec: &FeatureNetSpec,
    weights: &LossWeights,
) -> Result<GeneratorLoss> {
    let percep = perceptual_loss(tape, sr, hr, features, spec)?;
    let adv = relativistic_g_loss(tape, real_logits, fake_logits)?;
    let l1 = pixel_l1(tape, sr, hr)?;
    let adv_term = tape.scale(adv, T::from_f64_lossy(weights.lambda));
    let l1_term = tape.scale(l1, T::from_f64_lossy(weights.eta));
    let total = tape.add(percep, adv_term)?;
    let total = tape.add(total, l1_term)?;
    Ok(GeneratorLoss { total, percep, adv, l1 })
}
