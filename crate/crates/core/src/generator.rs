//! The 4x residual-in-residual dense block generator.
//!
//! ```text
//! lr ─ conv_first ─┬─ RRDB × num_rrdb ─ conv_body ─(+)─ up2x ─ conv_up1 ─ lrelu
//!                  └──────────────────────────────────┘
//!    ─ up2x ─ conv_up2 ─ lrelu ─ conv_hr ─ lrelu ─ conv_last ─ sr
//! ```
//!
//! Each RRDB is `x + β·DB3(DB2(DB1(x)))`, and each dense block is
//! `x + β·conv5([x, o1, o2, o3, o4])` where `ok = lrelu(convk([x, o1..ok-1]))`.
//! There is no normalization layer anywhere in the network. All kernels are
//! 3x3 with padding 1.
//!
//! # Parameter names
//!
//! | name | shape |
//! |------|-------|
//! | `conv_first.{weight,bias}` | `[F, 3, 3, 3]`, `[F]` |
//! | `body.{i}.rdb{j}.conv{k}.{weight,bias}` | `[G, F+(k-1)G, 3, 3]`, `[G]` for k in 1..=4 |
//! | `body.{i}.rdb{j}.conv5.{weight,bias}` | `[F, F+4G, 3, 3]`, `[F]` |
//! | `conv_body`, `conv_up1`, `conv_up2`, `conv_hr` | `[F, F, 3, 3]`, `[F]` |
//! | `conv_last.{weight,bias}` | `[3, F, 3, 3]`, `[3]` |
//!
//! with `i` in `0..num_rrdb` and `j` in `1..=3`. The parameter count is
//!
//! ```text
//! 3·num_rrdb·(Σ_{k=1..4} (9G(F+(k-1)G) + G) + 9F(F+4G) + F)
//!   + 4·(9F² + F) + (27F + F) + (27F + 3)
//! ```

#[cfg(not(feature = "std"))]
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::init::conv_kernel;
use crate::params::{Bound, Params};
use crate::real::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const DENSE_BLOCKS_PER_RRDB: usize = 3;
pub const CONVS_PER_DENSE_BLOCK: usize = 5;

/// Smallest LR side the generator accepts.
pub const MIN_INPUT_SIDE: usize = 4;

/// Generator hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields, default))]
pub struct ArchConfig {
    pub num_rrdb: usize,
    pub num_features: usize,
    pub growth_channels: usize,
    /// Residual scale β applied to every dense-block and RRDB branch.
    pub residual_scale: f64,
    pub leaky_slope: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { num_rrdb: 4, num_features: 32, growth_channels: 16, residual_scale: 0.2, leaky_slope: 0.2 }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_rrdb < 1 {
            return Err(Error::Config(format!("num_rrdb must be >= 1, got {}", self.num_rrdb)));
        }
        if self.num_features < 4 {
            return Err(Error::Config(format!("num_features must be >= 4, got {}", self.num_features)));
        }
        if self.growth_channels < 2 {
            return Err(Error::Config(format!("growth_channels must be >= 2, got {}", self.growth_channels)));
        }
        if !(0.0..=1.0).contains(&self.residual_scale) {
            return Err(Error::Config(format!("residual_scale {} outside [0, 1]", self.residual_scale)));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(Error::Config(format!("leaky_slope {} outside [0, 1)", self.leaky_slope)));
        }
        Ok(())
    }

    /// Every parameter name with its shape, in name order.
    pub fn schema(&self) -> Vec<(String, Vec<usize>)> {
        let (f, g) = (self.num_features, self.growth_channels);
        let mut out = Vec::new();
        let mut conv = |name: String, cout: usize, cin: usize| {
            out.push((format!("{name}.weight"), vec![cout, cin, 3, 3]));
            out.push((format!("{name}.bias"), vec![cout]));
        };
        conv("conv_first".into(), f, 3);
        for i in 0..self.num_rrdb {
            for j in 1..=DENSE_BLOCKS_PER_RRDB {
                for k in 1..=CONVS_PER_DENSE_BLOCK {
                    let cout = if k == CONVS_PER_DENSE_BLOCK { f } else { g };
                    conv(dense_conv_name(i, j, k), cout, f + (k - 1) * g);
                }
            }
        }
        for name in ["conv_body", "conv_up1", "conv_up2", "conv_hr"] {
            conv(name.into(), f, f);
        }
        conv("conv_last".into(), 3, f);
        out.sort();
        out
    }

    /// Closed-form parameter count (see the module docs).
    pub fn param_count(&self) -> usize {
        let (f, g) = (self.num_features, self.growth_channels);
        let dense: usize = (1..=4).map(|k| 9 * g * (f + (k - 1) * g) + g).sum::<usize>() + 9 * f * (f + 4 * g) + f;
        3 * self.num_rrdb * dense + 4 * (9 * f * f + f) + (27 * f + f) + (27 * f + 3)
    }
}

fn dense_conv_name(rrdb: usize, block: usize, conv: usize) -> String {
    format!("body.{rrdb}.rdb{block}.conv{conv}")
}

/// Generator parameters together with the architecture they instantiate.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorWeights<T = f32> {
    pub arch: ArchConfig,
    pub params: Params<T>,
}

impl GeneratorWeights<f32> {
    /// Kaiming-normal kernels and zero biases. Kernels on the dense-block
    /// residual branches are further scaled by 0.1.
    pub fn init<R: Rng + ?Sized>(arch: ArchConfig, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut params = Params::new();
        // schema() is name-sorted, so draws happen in a stable order.
        for (name, shape) in arch.schema() {
            let t = if let Some(stem) = name.strip_suffix(".weight") {
                let gain = if stem.starts_with("body.") { 0.1 } else { 1.0 };
                conv_kernel(rng, shape[0], shape[1], shape[2], shape[3], gain)
            } else {
                Tensor::zeros(&shape)
            };
            params.insert(name, t);
        }
        Ok(Self { arch, params })
    }
}

impl<T: Real> GeneratorWeights<T> {
    pub fn from_params(arch: ArchConfig, params: Params<T>) -> Result<Self> {
        arch.validate()?;
        params.check_schema(&arch.schema())?;
        Ok(Self { arch, params })
    }

    pub fn zeros(arch: ArchConfig) -> Result<Self> {
        arch.validate()?;
        let params = arch.schema().into_iter().map(|(n, s)| (n, Tensor::zeros(&s))).collect();
        Ok(Self { arch, params })
    }

    pub fn cast<U: Real>(&self) -> GeneratorWeights<U> {
        GeneratorWeights { arch: self.arch, params: self.params.cast() }
    }

    /// Runs the generator on a constant input without gradient tracking.
    pub fn upscale(&self, lr: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = tape.constant(lr.clone());
        let y = generator_forward(&mut tape, x, &bound, &self.arch)?;
        Ok(tape.value(y).clone())
    }
}

/// Archive entry holding `[num_rrdb, num_features, growth_channels,
/// residual_scale, leaky_slope]`.
pub const ARCH_META: &str = "meta.arch";

impl GeneratorWeights<f32> {
    /// Parameters plus the [`ARCH_META`] entry, ready for an archive.
    pub fn to_archive(&self) -> Params<f32> {
        let mut p = self.params.clone();
        let a = &self.arch;
        let meta = vec![
            a.num_rrdb as f32,
            a.num_features as f32,
            a.growth_channels as f32,
            a.residual_scale as f32,
            a.leaky_slope as f32,
        ];
        p.insert(ARCH_META, Tensor::from_data(&[5], meta).expect("meta shape"));
        p
    }

    /// Rebuilds weights from an archive map, taking the architecture from
    /// its [`ARCH_META`] entry and checking every tensor against the schema.
    pub fn from_archive(mut params: Params<f32>) -> Result<Self> {
        let meta = params.remove(ARCH_META).ok_or_else(|| Error::MissingParam(ARCH_META.into()))?;
        let arch = arch_from_meta(meta.data())?;
        Self::from_params(arch, params)
    }
}

fn arch_from_meta(m: &[f32]) -> Result<ArchConfig> {
    let [rrdb, feat, growth, beta, slope] = m else {
        return Err(Error::Config(format!("`{ARCH_META}` must hold 5 values, found {}", m.len())));
    };
    let count = |v: f32, what: &str| {
        if v >= 0.0 && v.fract() == 0.0 && v < 1e7 {
            Ok(v as usize)
        } else {
            Err(Error::Config(format!("`{ARCH_META}` has invalid {what} {v}")))
        }
    };
    let arch = ArchConfig {
        num_rrdb: count(*rrdb, "num_rrdb")?,
        num_features: count(*feat, "num_features")?,
        growth_channels: count(*growth, "growth_channels")?,
        residual_scale: *beta as f64,
        leaky_slope: *slope as f64,
    };
    arch.validate()?;
    Ok(arch)
}

impl ArchConfig {
    /// Equality at the precision stored in archives.
    pub fn matches_stored(&self, other: &ArchConfig) -> bool {
        self.num_rrdb == other.num_rrdb
            && self.num_features == other.num_features
            && self.growth_channels == other.growth_channels
            && self.residual_scale as f32 == other.residual_scale as f32
            && self.leaky_slope as f32 == other.leaky_slope as f32
    }
}

fn conv3x3<T: Real>(tape: &mut Tape<T>, x: Var, w: &Bound, name: &str) -> Result<Var> {
    let k = w.var(&format!("{name}.weight"))?;
    let b = w.var(&format!("{name}.bias"))?;
    tape.conv2d(x, k, Some(b), 1, 1)
}

fn check_features<T: Real>(tape: &Tape<T>, x: Var, cfg: &ArchConfig) -> Result<()> {
    let (_, c, _, _) = tape.value(x).dims4()?;
    if c != cfg.num_features {
        return Err(shape_err!("block input has {c} channels, expected {}", cfg.num_features));
    }
    Ok(())
}

/// One dense block: `x + β·conv5([x, o1, o2, o3, o4])`.
///
/// `prefix` names the block, e.g. `body.0.rdb1`.
pub fn dense_block_forward<T: Real>(tape: &mut Tape<T>, x: Var, w: &Bound, prefix: &str, cfg: &ArchConfig) -> Result<Var> {
    check_features(tape, x, cfg)?;
    let slope = T::from_f64_lossy(cfg.leaky_slope);
    let mut features = vec![x];
    for k in 1..CONVS_PER_DENSE_BLOCK {
        let input = if features.len() == 1 { x } else { tape.concat_channels(&features)? };
        let o = conv3x3(tape, input, w, &format!("{prefix}.conv{k}"))?;
        let o = tape.leaky_relu(o, slope)?;
        features.push(o);
    }
    let input = tape.concat_channels(&features)?;
    let residual = conv3x3(tape, input, w, &format!("{prefix}.conv{CONVS_PER_DENSE_BLOCK}"))?;
    let residual = tape.scale(residual, T::from_f64_lossy(cfg.residual_scale));
    tape.add(x, residual)
}

/// Three chained dense blocks wrapped in a scaled residual:
/// `x + β·DB3(DB2(DB1(x)))`.
pub fn rrdb_forward<T: Real>(tape: &mut Tape<T>, x: Var, w: &Bound, index: usize, cfg: &ArchConfig) -> Result<Var> {
    let mut h = x;
    for j in 1..=DENSE_BLOCKS_PER_RRDB {
        h = dense_block_forward(tape, h, w, &format!("body.{index}.rdb{j}"), cfg)?;
    }
    let residual = tape.scale(h, T::from_f64_lossy(cfg.residual_scale));
    tape.add(x, residual)
}

/// Maps `[n, 3, h, w]` to `[n, 3, 4h, 4w]`. The output is not clamped.
pub fn generator_forward<T: Real>(tape: &mut Tape<T>, lr: Var, w: &Bound, cfg: &ArchConfig) -> Result<Var> {
    let (_, c, h, wd) = tape.value(lr).dims4()?;
    if c != 3 {
        return Err(shape_err!("generator input has {c} channels, expected 3"));
    }
    if h < MIN_INPUT_SIDE || wd < MIN_INPUT_SIDE {
        return Err(shape_err!("generator input {h}x{wd} is below the {MIN_INPUT_SIDE}x{MIN_INPUT_SIDE} minimum"));
    }
    let slope = T::from_f64_lossy(cfg.leaky_slope);
    let shallow = conv3x3(tape, lr, w, "conv_first")?;
    let mut trunk = shallow;
    for i in 0..cfg.num_rrdb {
        trunk = rrdb_forward(tape, trunk, w, i, cfg)?;
    }
    let trunk = conv3x3(tape, trunk, w, "conv_body")?;
    let mut feat = tape.add(shallow, trunk)?;
    for name in ["conv_up1", "conv_up2"] {
        let up = tape.upsample_nearest2x(feat)?;
        let up = conv3x3(tape, up, w, name)?;
        feat = tape.leaky_relu(up, slope)?;
    }
    let hr = conv3x3(tape, feat, w, "conv_hr")?;
    let hr = tape.leaky_relu(hr, slope)?;
    conv3x3(tape, hr, w, "conv_last")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::rng_for;

    fn tiny() -> ArchConfig {
        ArchConfig { num_rrdb: 1, num_features: 8, growth_channels: 4, residual_scale: 0.2, leaky_slope: 0.2 }
    }

    fn random_input(shape: &[usize], seed: u64) -> Tensor<f32> {
        let mut rng = rng_for(seed, 99);
        let n = shape.iter().product();
        Tensor::from_data(shape, (0..n).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn param_count_matches_schema() {
        for cfg in [
            tiny(),
            ArchConfig::default(),
            ArchConfig { num_rrdb: 2, num_features: 16, growth_channels: 8, ..ArchConfig::default() },
        ] {
            let counted: usize = cfg.schema().iter().map(|(_, s)| s.iter().product::<usize>()).sum();
            assert_eq!(cfg.param_count(), counted);
            let w = GeneratorWeights::init(cfg, &mut rng_for(0, 0)).unwrap();
            assert_eq!(w.params.numel(), counted);
            // 2 convs (weight + bias) per entry: first, 15 per RRDB, 4 plain, last
            assert_eq!(cfg.schema().len(), 2 * (1 + 15 * cfg.num_rrdb + 4 + 1));
        }
    }

    #[test]
    fn output_is_four_times_input() {
        let w = GeneratorWeights::init(tiny(), &mut rng_for(1, 0)).unwrap();
        let y = w.upscale(&random_input(&[1, 3, 8, 8], 1)).unwrap();
        assert_eq!(y.shape(), &[1, 3, 32, 32]);
        let y = w.upscale(&random_input(&[2, 3, 5, 7], 2)).unwrap();
        assert_eq!(y.shape(), &[2, 3, 20, 28]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let w = GeneratorWeights::init(tiny(), &mut rng_for(1, 0)).unwrap();
        assert!(matches!(w.upscale(&Tensor::zeros(&[1, 1, 8, 8])), Err(Error::Shape(_))));
        assert!(matches!(w.upscale(&Tensor::zeros(&[1, 3, 3, 8])), Err(Error::Shape(_))));
    }

    #[test]
    fn forward_is_deterministic() {
        let w = GeneratorWeights::init(tiny(), &mut rng_for(2, 0)).unwrap();
        let x = random_input(&[1, 3, 6, 6], 3);
        let a = w.upscale(&x).unwrap();
        let b = w.upscale(&x).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn dense_block_identities() {
        let cfg = tiny();
        let x = random_input(&[1, 8, 8, 8], 4);

        let zeros = GeneratorWeights::<f32>::zeros(cfg).unwrap();
        let mut tape = Tape::new();
        let bound = zeros.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let y = dense_block_forward(&mut tape, xv, &bound, "body.0.rdb1", &cfg).unwrap();
        assert_eq!(tape.value(y), &x);

        let no_scale = ArchConfig { residual_scale: 0.0, ..cfg };
        let w = GeneratorWeights::init(no_scale, &mut rng_for(5, 0)).unwrap();
        let mut tape = Tape::new();
        let bound = w.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let y = dense_block_forward(&mut tape, xv, &bound, "body.0.rdb2", &no_scale).unwrap();
        assert_eq!(tape.value(y), &x);
        assert_eq!(tape.value(y).shape(), &[1, 8, 8, 8]);

        let wrong = tape.constant(Tensor::zeros(&[1, 4, 8, 8]));
        assert!(dense_block_forward(&mut tape, wrong, &bound, "body.0.rdb1", &no_scale).is_err());
    }

    #[test]
    fn rrdb_wraps_dense_chain() {
        let cfg = tiny();
        let w = GeneratorWeights::init(cfg, &mut rng_for(6, 0)).unwrap().cast::<f64>();
        let x = random_input(&[1, 8, 6, 6], 7).cast::<f64>();
        let mut tape = Tape::new();
        let bound = w.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let y = rrdb_forward(&mut tape, xv, &bound, 0, &cfg).unwrap();
        let mut chain = xv;
        for j in 1..=3 {
            chain = dense_block_forward(&mut tape, chain, &bound, &format!("body.0.rdb{j}"), &cfg).unwrap();
        }
        let beta = cfg.residual_scale;
        for ((&yo, &xo), &co) in tape.value(y).data().iter().zip(x.data()).zip(tape.value(chain).data()) {
            assert!((yo - (xo + beta * co)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_config() {
        let bad = ArchConfig { residual_scale: 1.5, ..tiny() };
        assert!(GeneratorWeights::init(bad, &mut rng_for(0, 0)).is_err());
        let bad = ArchConfig { num_rrdb: 0, ..tiny() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn archive_form_round_trips() {
        let w = GeneratorWeights::init(tiny(), &mut rng_for(8, 0)).unwrap();
        let stored = w.to_archive();
        assert!(stored.contains(ARCH_META));
        let back = GeneratorWeights::from_archive(stored.clone()).unwrap();
        assert!(back.arch.matches_stored(&w.arch));
        assert_eq!(back.params, w.params);

        let mut broken = stored;
        broken.insert("conv_last.bias", Tensor::zeros(&[4]));
        let err = GeneratorWeights::from_archive(broken).unwrap_err();
        assert!(matches!(err, Error::ParamShape { ref name, .. } if name == "conv_last.bias"));
    }
}
