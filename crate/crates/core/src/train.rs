//! Optimization: Adam, the pixel-loss pretraining step, the adversarial
//! step, and a [`Trainer`] that sequences the two phases.
//!
//! Every random draw of step `s` comes from stream `s` of the run seed, so a
//! run restored from a checkpoint taken after step `s - 1` continues exactly
//! like an uninterrupted one.

#[cfg(not(feature = "std"))]
use num_traits::Float;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::discriminator::{discriminator_forward, relativistic_d_loss, DiscConfig, DiscWeights};
use crate::error::{domain_err, Error, Result};
use crate::generator::{generator_forward, ArchConfig, GeneratorWeights};
use crate::init::rng_for;
use crate::params::Params;
use crate::patch::{sample_batch, Batch, ImagePair};
use crate::perceptual::{pixel_l1, total_generator_loss, FeatureNet, FeatureNetSpec, LossWeights};
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::SCALE;

const GENERATOR_STREAM: u64 = u64::MAX - 1;
const DISCRIMINATOR_STREAM: u64 = u64::MAX - 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Adam moment buffers for a named parameter set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub t: u64,
    moments: BTreeMap<String, (Vec<f32>, Vec<f32>)>,
}

/// One Adam update of a single tensor. `t` is the already-incremented step.
pub fn adam_step(param: &mut Tensor<f32>, grad: &Tensor<f32>, m: &mut [f32], v: &mut [f32], t: u64, cfg: &AdamConfig) -> Result<()> {
    if param.shape() != grad.shape() || m.len() != param.numel() || v.len() != param.numel() {
        return Err(domain_err!("adam: parameter {:?} and gradient {:?} disagree", param.shape(), grad.shape()));
    }
    if t == 0 {
        return Err(domain_err!("adam: step counter must be incremented before use"));
    }
    let bc1 = 1.0 - cfg.beta1.powi(t.min(i32::MAX as u64) as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t.min(i32::MAX as u64) as i32);
    for (((p, &g), mi), vi) in param.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
        let g = g as f64;
        let m_new = cfg.beta1 * *mi as f64 + (1.0 - cfg.beta1) * g;
        let v_new = cfg.beta2 * *vi as f64 + (1.0 - cfg.beta2) * g * g;
        *mi = m_new as f32;
        *vi = v_new as f32;
        let m_hat = m_new / bc1;
        let v_hat = v_new / bc2;
        *p = (*p as f64 - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps)) as f32;
    }
    Ok(())
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies one Adam step to every parameter that has a gradient.
    pub fn step(&mut self, params: &mut Params<f32>, grads: &Params<f32>, cfg: &AdamConfig) -> Result<()> {
        self.t += 1;
        for (name, p) in params.iter_mut() {
            let g = grads.get(name)?;
            let (m, v) = self
                .moments
                .entry(name.into())
                .or_insert_with(|| (alloc::vec![0.0; p.numel()], alloc::vec![0.0; p.numel()]));
            adam_step(p, g, m, v, self.t, cfg)?;
        }
        Ok(())
    }

    /// `t`, `m.<name>` and `v.<name>` entries for archiving.
    pub fn to_params(&self, shapes: &Params<f32>) -> Result<Params<f32>> {
        let mut out = Params::new();
        out.insert("t", Tensor::scalar(self.t as f32));
        for (name, (m, v)) in &self.moments {
            let shape = shapes.get(name)?.shape();
            out.insert(format!("m.{name}"), Tensor::from_slice(shape, m)?);
            out.insert(format!("v.{name}"), Tensor::from_slice(shape, v)?);
        }
        Ok(out)
    }

    pub fn from_params(p: &Params<f32>) -> Result<Self> {
        let t = p.get("t")?.item().ok_or_else(|| Error::Config("optimizer step is not a scalar".into()))?;
        let mut moments = BTreeMap::new();
        for (name, m) in p.iter() {
            if let Some(param) = name.strip_prefix("m.") {
                let v = p.get(&format!("v.{param}"))?;
                moments.insert(param.into(), (m.data().to_vec(), v.data().to_vec()));
            }
        }
        Ok(Self { t: t as u64, moments })
    }
}

/// Hyperparameters of a full two-phase run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub hr_crop: usize,
    pub phase1_steps: u64,
    pub phase2_steps: u64,
    /// Generator learning rate during pixel pretraining.
    pub lr_pretrain: f64,
    /// Generator learning rate during adversarial training.
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_opt: f64,
    pub checkpoint_every: u64,
    pub log_every: u64,
    pub loss: LossWeights,
    pub arch: ArchConfig,
    pub disc: DiscConfig,
    pub features: FeatureNetSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: 4,
            hr_crop: 64,
            phase1_steps: 1000,
            phase2_steps: 1000,
            lr_pretrain: 2e-4,
            lr_g: 1e-4,
            lr_d: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps_opt: 1e-8,
            checkpoint_every: 500,
            log_every: 10,
            loss: LossWeights::default(),
            arch: ArchConfig::default(),
            disc: DiscConfig::default(),
            features: FeatureNetSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.hr_crop == 0 || !self.hr_crop.is_multiple_of(SCALE) {
            return bad(format!("hr_crop {} must be a positive multiple of {SCALE}", self.hr_crop));
        }
        if self.hr_crop / SCALE < crate::generator::MIN_INPUT_SIDE {
            return bad(format!("hr_crop {} gives LR patches below the generator minimum", self.hr_crop));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        for (name, v) in [("lr_pretrain", self.lr_pretrain), ("lr_g", self.lr_g), ("lr_d", self.lr_d), ("eps_opt", self.eps_opt)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if self.log_every == 0 {
            return bad("log_every must be positive".into());
        }
        self.loss.validate()?;
        self.arch.validate()?;
        self.features.validate()?;
        if !self.hr_crop.is_multiple_of(self.features.downsample_factor()) {
            return bad(format!("hr_crop {} is not divisible by the feature downsampling", self.hr_crop));
        }
        if self.phase2_steps > 0 {
            self.disc_config().validate()?;
        }
        Ok(())
    }

    /// Discriminator configuration with its input size tied to the crop.
    pub fn disc_config(&self) -> DiscConfig {
        DiscConfig { input_size: self.hr_crop, ..self.disc }
    }

    pub fn total_steps(&self) -> u64 {
        self.phase1_steps + self.phase2_steps
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig { lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps_opt }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Gan,
    Done,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Pretrain => "pretrain",
            Phase::Gan => "gan",
            Phase::Done => "done",
        })
    }
}

/// Loss components of one adversarial step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanLosses {
    pub total: f32,
    pub percep: f32,
    pub adv: f32,
    pub l1: f32,
    pub d_loss: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepLosses {
    Pretrain { l1: f32 },
    Gan(GanLosses),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Zero-based global step index.
    pub step: u64,
    pub losses: StepLosses,
}

impl StepRecord {
    pub fn phase(&self) -> Phase {
        match self.losses {
            StepLosses::Pretrain { .. } => Phase::Pretrain,
            StepLosses::Gan(_) => Phase::Gan,
        }
    }
}

fn finite(v: f32, step: u64, component: &'static str) -> Result<f32> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { step, component })
    }
}

fn scalar(t: &Tensor<f32>) -> f32 {
    t.item().expect("scalar loss")
}

/// One pixel-L1 generator update. Returns the loss before the update.
pub fn pretrain_step(batch: &Batch, generator: &mut GeneratorWeights<f32>, opt: &mut OptimizerState, adam: &AdamConfig) -> Result<f32> {
    let mut tape = Tape::new();
    let bound = generator.params.bind(&mut tape, true);
    let lr = tape.constant(batch.lr.clone());
    let hr = tape.constant(batch.hr.clone());
    let sr = generator_forward(&mut tape, lr, &bound, &generator.arch)?;
    let loss = pixel_l1(&mut tape, sr, hr)?;
    let value = scalar(tape.value(loss));
    if !value.is_finite() {
        return Ok(value);
    }
    tape.backward(loss)?;
    opt.step(&mut generator.params, &bound.grads(&tape), adam)?;
    Ok(value)
}

/// Mutable model state touched by an adversarial step.
pub struct GanModels<'a> {
    pub generator: &'a mut GeneratorWeights<f32>,
    pub discriminator: &'a mut DiscWeights<f32>,
    pub features: &'a FeatureNet<f32>,
    pub gen_opt: &'a mut OptimizerState,
    pub disc_opt: &'a mut OptimizerState,
}

/// One discriminator update followed by one generator update.
///
/// The discriminator sees generated images as constants. The generator is
/// then scored by the freshly updated discriminator through the composite
/// objective; real images are constants with respect to the generator, so
/// only the fake logits carry generator gradients.
pub fn gan_train_step(batch: &Batch, models: GanModels<'_>, cfg: &TrainConfig) -> Result<GanLosses> {
    let GanModels { generator, discriminator, features, gen_opt, disc_opt } = models;
    let disc_cfg = discriminator.config;

    let sr_detached = generator.upscale(&batch.lr)?;
    let mut tape = Tape::new();
    let d_bound = discriminator.params.bind(&mut tape, true);
    let real = tape.constant(batch.hr.clone());
    let fake = tape.constant(sr_detached);
    let real_logits = discriminator_forward(&mut tape, real, &d_bound, &disc_cfg)?;
    let fake_logits = discriminator_forward(&mut tape, fake, &d_bound, &disc_cfg)?;
    let d_loss = relativistic_d_loss(&mut tape, real_logits, fake_logits)?;
    let d_value = scalar(tape.value(d_loss));
    if d_value.is_finite() {
        tape.backward(d_loss)?;
        disc_opt.step(&mut discriminator.params, &d_bound.grads(&tape), &cfg.adam(cfg.lr_d))?;
    }

    let mut tape = Tape::new();
    let g_bound = generator.params.bind(&mut tape, true);
    let d_bound = discriminator.params.bind(&mut tape, false);
    let f_bound = features.bind(&mut tape);
    let lr = tape.constant(batch.lr.clone());
    let hr = tape.constant(batch.hr.clone());
    let sr = generator_forward(&mut tape, lr, &g_bound, &generator.arch)?;
    let real_logits = discriminator_forward(&mut tape, hr, &d_bound, &disc_cfg)?;
    let fake_logits = discriminator_forward(&mut tape, sr, &d_bound, &disc_cfg)?;
    let parts = total_generator_loss(&mut tape, sr, hr, real_logits, fake_logits, &f_bound, &features.spec, &cfg.loss)?;
    let losses = GanLosses {
        total: scalar(tape.value(parts.total)),
        percep: scalar(tape.value(parts.percep)),
        adv: scalar(tape.value(parts.adv)),
        l1: scalar(tape.value(parts.l1)),
        d_loss: d_value,
    };
    if losses.total.is_finite() {
        tape.backward(parts.total)?;
        gen_opt.step(&mut generator.params, &g_bound.grads(&tape), &cfg.adam(cfg.lr_g))?;
    }
    Ok(losses)
}

/// Full training state of a two-phase run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub generator: GeneratorWeights<f32>,
    pub discriminator: Option<DiscWeights<f32>>,
    pub features: FeatureNet<f32>,
    pub gen_opt: OptimizerState,
    pub disc_opt: OptimizerState,
    /// Number of completed steps.
    pub step: u64,
}

impl Trainer {
    /// Fresh run: generator drawn from the run seed.
    pub fn new(cfg: TrainConfig, features: FeatureNet<f32>) -> Result<Self> {
        cfg.validate()?;
        if features.spec != cfg.features {
            return Err(Error::Config("feature network does not match the configured spec".into()));
        }
        let generator = GeneratorWeights::init(cfg.arch, &mut rng_for(cfg.seed, GENERATOR_STREAM))?;
        Ok(Self {
            cfg,
            generator,
            discriminator: None,
            features,
            gen_opt: OptimizerState::new(),
            disc_opt: OptimizerState::new(),
            step: 0,
        })
    }

    pub fn phase(&self) -> Phase {
        if self.step < self.cfg.phase1_steps {
            Phase::Pretrain
        } else if self.step < self.cfg.total_steps() {
            Phase::Gan
        } else {
            Phase::Done
        }
    }

    /// The minibatch for the next step, drawn from that step's stream.
    pub fn next_batch(&self, images: &[ImagePair]) -> Result<Batch> {
        sample_batch(images, self.cfg.batch_size, self.cfg.hr_crop, &mut rng_for(self.cfg.seed, self.step))
    }

    /// Runs one step on `batch`. Entering the adversarial phase creates the
    /// discriminator (if none was restored) and restarts the generator's
    /// optimizer state.
    pub fn train_step(&mut self, batch: &Batch) -> Result<StepRecord> {
        let step = self.step;
        let losses = match self.phase() {
            Phase::Done => return Err(Error::Domain(format!("training already finished after {step} steps"))),
            Phase::Pretrain => {
                let l1 = pretrain_step(batch, &mut self.generator, &mut self.gen_opt, &self.cfg.adam(self.cfg.lr_pretrain))?;
                StepLosses::Pretrain { l1: finite(l1, step, "l1")? }
            }
            Phase::Gan => {
                if self.discriminator.is_none() {
                    let disc_cfg = self.cfg.disc_config();
                    self.discriminator =
                        Some(DiscWeights::init(disc_cfg, &mut rng_for(self.cfg.seed, DISCRIMINATOR_STREAM))?);
                    self.gen_opt = OptimizerState::new();
                    self.disc_opt = OptimizerState::new();
                }
                let disc = self.discriminator.as_mut().expect("created above");
                let l = gan_train_step(
                    batch,
                    GanModels {
                        generator: &mut self.generator,
                        discriminator: disc,
                        features: &self.features,
                        gen_opt: &mut self.gen_opt,
                        disc_opt: &mut self.disc_opt,
                    },
                    &self.cfg,
                )?;
                finite(l.d_loss, step, "discriminator")?;
                finite(l.percep, step, "perceptual")?;
                finite(l.adv, step, "adversarial")?;
                finite(l.l1, step, "l1")?;
                finite(l.total, step, "total")?;
                StepLosses::Gan(l)
            }
        };
        self.step += 1;
        Ok(StepRecord { step, losses })
    }

    /// Samples the next batch and trains on it.
    pub fn step_on(&mut self, images: &[ImagePair]) -> Result<StepRecord> {
        let batch = self.next_batch(images)?;
        self.train_step(&batch)
    }

    /// Step counter and optimizer moments, for checkpointing.
    pub fn state_params(&self) -> Result<Params<f32>> {
        let mut out = Params::new();
        out.insert("meta.step", Tensor::scalar(self.step as f32));
        out.extend(self.gen_opt.to_params(&self.generator.params)?.with_prefix("gen_opt."));
        if let Some(d) = &self.discriminator {
            out.extend(self.disc_opt.to_params(&d.params)?.with_prefix("disc_opt."));
        }
        Ok(out)
    }

    /// Rebuilds a trainer from checkpointed pieces.
    pub fn restore(
        cfg: TrainConfig,
        features: FeatureNet<f32>,
        generator: GeneratorWeights<f32>,
        discriminator: Option<DiscWeights<f32>>,
        state: &Params<f32>,
    ) -> Result<Self> {
        cfg.validate()?;
        if !generator.arch.matches_stored(&cfg.arch) {
            return Err(Error::Config("checkpoint generator architecture differs from the configuration".into()));
        }
        let step = state.get("meta.step")?.item().ok_or_else(|| Error::Config("meta.step is not a scalar".into()))? as u64;
        let gen_opt = OptimizerState::from_params(&state.strip_prefix("gen_opt."))?;
        let disc_opt = match &discriminator {
            Some(_) => OptimizerState::from_params(&state.strip_prefix("disc_opt."))?,
            None => OptimizerState::new(),
        };
        Ok(Self { cfg, generator, discriminator, features, gen_opt, disc_opt, step })
    }
}
