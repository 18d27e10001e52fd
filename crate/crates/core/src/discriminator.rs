//! Convolutional critic and relativistic-average adversarial losses.
//!
//! The critic `C` is a stack of stride-2 3x3 convolutions (channels doubling
//! each stage) with leaky ReLU and no normalization, followed by global
//! average pooling and two dense layers expressed as 1x1 convolutions. It
//! returns one raw logit per sample.
//!
//! The relativistic average discriminator compares each logit against the
//! batch mean of the other set, `D(a, b) = σ(C(a) − mean C(b))`:
//!
//! ```text
//! L_D = −mean_r log D(x_r, x_f) − mean_f log(1 − D(x_f, x_r))
//! L_G = −mean_r log(1 − D(x_r, x_f)) − mean_f log D(x_f, x_r)
//! ```
//!
//! Both are evaluated as softplus terms: `−log σ(z) = softplus(−z)` and
//! `−log(1 − σ(z)) = softplus(z)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{domain_err, shape_err, Error, Result};
use crate::init::conv_kernel;
use crate::params::{Bound, Params};
use crate::real::Real;
use crate::tape::{softplus, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields, default))]
pub struct DiscConfig {
    /// Number of stride-2 convolution stages.
    pub stages: usize,
    /// Channels of the first stage; each later stage doubles them.
    pub base_channels: usize,
    /// Width of the hidden dense layer.
    pub hidden: usize,
    /// Side length of the square images the critic accepts. Training sets
    /// it to the HR crop size.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub input_size: usize,
    pub leaky_slope: f64,
}

impl Default for DiscConfig {
    fn default() -> Self {
        Self { stages: 5, base_channels: 16, hidden: 64, input_size: 64, leaky_slope: 0.2 }
    }
}

impl DiscConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 || self.base_channels == 0 || self.hidden == 0 || self.input_size == 0 {
            return Err(Error::Config(format!("discriminator dimensions must be positive: {self:?}")));
        }
        if self.stages > 16 {
            return Err(Error::Config(format!("too many discriminator stages: {}", self.stages)));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(Error::Config(format!("leaky_slope {} outside [0, 1)", self.leaky_slope)));
        }
        Ok(())
    }

    fn stage_channels(&self, k: usize) -> usize {
        self.base_channels << k
    }

    pub fn schema(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut cin = 3;
        for k in 0..self.stages {
            let cout = self.stage_channels(k);
            out.push((format!("stage{k}.weight"), vec![cout, cin, 3, 3]));
            out.push((format!("stage{k}.bias"), vec![cout]));
            cin = cout;
        }
        out.push(("dense1.weight".into(), vec![self.hidden, cin, 1, 1]));
        out.push(("dense1.bias".into(), vec![self.hidden]));
        out.push(("dense2.weight".into(), vec![1, self.hidden, 1, 1]));
        out.push(("dense2.bias".into(), vec![1]));
        out.sort();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscWeights<T = f32> {
    pub config: DiscConfig,
    pub params: Params<T>,
}

impl DiscWeights<f32> {
    pub fn init<R: Rng + ?Sized>(config: DiscConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = Params::new();
        for (name, shape) in config.schema() {
            let t = if name.ends_with(".weight") {
                conv_kernel(rng, shape[0], shape[1], shape[2], shape[3], 1.0)
            } else {
                Tensor::zeros(&shape)
            };
            params.insert(name, t);
        }
        Ok(Self { config, params })
    }
}

impl<T: Real> DiscWeights<T> {
    pub fn from_params(config: DiscConfig, params: Params<T>) -> Result<Self> {
        config.validate()?;
        params.check_schema(&config.schema())?;
        Ok(Self { config, params })
    }

    pub fn zeros(config: DiscConfig) -> Result<Self> {
        config.validate()?;
        let params = config.schema().into_iter().map(|(n, s)| (n, Tensor::zeros(&s))).collect();
        Ok(Self { config, params })
    }

    pub fn cast<U: Real>(&self) -> DiscWeights<U> {
        DiscWeights { config: self.config, params: self.params.cast() }
    }

    /// Logits for a constant batch, without gradient tracking.
    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let y = discriminator_forward(&mut tape, xv, &bound, &self.config)?;
        Ok(tape.value(y).clone())
    }
}

/// Archive entry holding `[stages, base_channels, hidden, input_size,
/// leaky_slope]`.
pub const DISC_META: &str = "meta.disc";

impl DiscWeights<f32> {
    pub fn to_archive(&self) -> Params<f32> {
        let c = &self.config;
        let mut p = self.params.clone();
        let meta = vec![c.stages as f32, c.base_channels as f32, c.hidden as f32, c.input_size as f32, c.leaky_slope as f32];
        p.insert(DISC_META, Tensor::from_data(&[5], meta).expect("meta shape"));
        p
    }

    pub fn from_archive(mut params: Params<f32>) -> Result<Self> {
        let meta = params.remove(DISC_META).ok_or_else(|| Error::MissingParam(DISC_META.into()))?;
        let [stages, base, hidden, size, slope] = meta.data() else {
            return Err(Error::Config(format!("`{DISC_META}` must hold 5 values")));
        };
        let config = DiscConfig {
            stages: *stages as usize,
            base_channels: *base as usize,
            hidden: *hidden as usize,
            input_size: *size as usize,
            leaky_slope: *slope as f64,
        };
        Self::from_params(config, params)
    }
}

/// `[n, 3, s, s] -> [n]` raw logits.
pub fn discriminator_forward<T: Real>(tape: &mut Tape<T>, x: Var, w: &Bound, cfg: &DiscConfig) -> Result<Var> {
    let (n, c, h, wd) = tape.value(x).dims4()?;
    if c != 3 {
        return Err(shape_err!("discriminator input has {c} channels, expected 3"));
    }
    if h != cfg.input_size || wd != cfg.input_size {
        return Err(shape_err!(
            "discriminator expects {0}x{0} inputs, got {h}x{wd}",
            cfg.input_size
        ));
    }
    let slope = T::from_f64_lossy(cfg.leaky_slope);
    let mut h = x;
    for k in 0..cfg.stages {
        let kernel = w.var(&format!("stage{k}.weight"))?;
        let bias = w.var(&format!("stage{k}.bias"))?;
        h = tape.conv2d(h, kernel, Some(bias), 2, 1)?;
        h = tape.leaky_relu(h, slope)?;
    }
    let pooled = tape.global_avg_pool(h)?;
    let d1 = tape.conv2d(pooled, w.var("dense1.weight")?, Some(w.var("dense1.bias")?), 1, 0)?;
    let d1 = tape.leaky_relu(d1, slope)?;
    let d2 = tape.conv2d(d1, w.var("dense2.weight")?, Some(w.var("dense2.bias")?), 1, 0)?;
    tape.reshape(d2, &[n])
}

fn relative<T: Real>(tape: &mut Tape<T>, real: Var, fake: Var) -> Result<(Var, Var)> {
    let mean_real = tape.mean(real)?;
    let mean_fake = tape.mean(fake)?;
    let real_rel = tape.sub_scalar(real, mean_fake)?;
    let fake_rel = tape.sub_scalar(fake, mean_real)?;
    Ok((real_rel, fake_rel))
}

/// Discriminator objective on batch logits.
pub fn relativistic_d_loss<T: Real>(tape: &mut Tape<T>, real: Var, fake: Var) -> Result<Var> {
    let (real_rel, fake_rel) = relative(tape, real, fake)?;
    let neg = tape.neg(real_rel);
    let real_term = tape.softplus(neg);
    let real_term = tape.mean(real_term)?;
    let fake_term = tape.softplus(fake_rel);
    let fake_term = tape.mean(fake_term)?;
    tape.add(real_term, fake_term)
}

/// Generator adversarial objective: the discriminator objective with the
/// roles of real and fake swapped.
pub fn relativistic_g_loss<T: Real>(tape: &mut Tape<T>, real: Var, fake: Var) -> Result<Var> {
    let (real_rel, fake_rel) = relative(tape, real, fake)?;
    let real_term = tape.softplus(real_rel);
    let real_term = tape.mean(real_term)?;
    let neg = tape.neg(fake_rel);
    let fake_term = tape.softplus(neg);
    let fake_term = tape.mean(fake_term)?;
    tape.add(real_term, fake_term)
}

fn batch_means(real: &[f64], fake: &[f64]) -> Result<(f64, f64)> {
    if real.is_empty() || fake.is_empty() {
        return Err(domain_err!("relativistic loss needs non-empty batches ({} real, {} fake)", real.len(), fake.len()));
    }
    let mr = real.iter().sum::<f64>() / real.len() as f64;
    let mf = fake.iter().sum::<f64>() / fake.len() as f64;
    Ok((mr, mf))
}

fn mean_of(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len() as f64;
    values.sum::<f64>() / n
}

/// Value of [`relativistic_d_loss`] on plain logits.
pub fn relativistic_d_loss_value(real: &[f64], fake: &[f64]) -> Result<f64> {
    let (mr, mf) = batch_means(real, fake)?;
    Ok(mean_of(real.iter().map(|&r| softplus(-(r - mf)))) + mean_of(fake.iter().map(|&f| softplus(f - mr))))
}

/// Value of [`relativistic_g_loss`] on plain logits.
pub fn relativistic_g_loss_value(real: &[f64], fake: &[f64]) -> Result<f64> {
    let (mr, mf) = batch_means(real, fake)?;
    Ok(mean_of(real.iter().map(|&r| softplus(r - mf))) + mean_of(fake.iter().map(|&f| softplus(-(f - mr)))))
}
