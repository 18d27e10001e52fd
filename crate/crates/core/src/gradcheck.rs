//! Finite-difference verification of the tape's analytic gradients.
//!
//! Checks run in `f64`. The error of one element is
//! `|analytic − central| / max(|analytic|, 1e-8)`, and a check reports the
//! maximum over the elements it visits.
//!
//! Sampled checks skip elements whose perturbation straddles an activation
//! kink, detected from function values alone: the two one-sided difference
//! quotients disagree by more than the tolerance.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::discriminator::{discriminator_forward, relativistic_d_loss, relativistic_g_loss, DiscConfig, DiscWeights};
use crate::error::{domain_err, Result};
use crate::generator::{generator_forward, ArchConfig, GeneratorWeights};
use crate::init::rng_for;
use crate::params::Params;
use crate::perceptual::{pixel_l1, total_generator_loss, FeatureNet, FeatureNetSpec, LossWeights};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const OP_TOLERANCE: f64 = 1e-4;
pub const LOSS_TOLERANCE: f64 = 1e-5;
pub const NETWORK_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_EPSILON: f64 = 1e-6;


/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    /// Number of elements perturbed.
    pub elements: usize,
    /// Sampled elements rejected as non-smooth at the step size.
    pub skipped: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

fn evaluate<F>(f: &F, x: &Tensor<f64>) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let loss = f(&mut tape, v)?;
    tape.value(loss).item().ok_or_else(|| domain_err!("checked function is not scalar-valued"))
}

/// Analytic gradient of the scalar `f` at `x`.
pub fn analytic_gradient<F>(f: &F, x: &Tensor<f64>) -> Result<Tensor<f64>>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone(), true);
    let loss = f(&mut tape, v)?;
    tape.backward(loss)?;
    Ok(tape.grad_tensor(v).unwrap_or_else(|| Tensor::zeros(x.shape())))
}

/// Maximum relative error over the listed flat indices of `x`.
pub fn finite_difference_check_at<F>(f: F, x: &Tensor<f64>, epsilon: f64, indices: &[usize]) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(domain_err!("epsilon must be positive, got {epsilon}"));
    }
    let analytic = analytic_gradient(&f, x)?;
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for &i in indices {
        if i >= x.numel() {
            return Err(domain_err!("index {i} out of range for {} elements", x.numel()));
        }
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + epsilon;
        let up = evaluate(&f, &probe)?;
        probe.data_mut()[i] = orig - epsilon;
        let down = evaluate(&f, &probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / a.abs().max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// The first `wanted` candidates at which `f` is smooth on the scale of
/// `epsilon`, plus the number of candidates rejected on the way.
pub fn smooth_indices<F>(
    f: F,
    x: &Tensor<f64>,
    epsilon: f64,
    candidates: &[usize],
    wanted: usize,
    tolerance: f64,
) -> Result<(Vec<usize>, usize)>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let centre = evaluate(&f, x)?;
    let mut probe = x.clone();
    let mut kept = Vec::new();
    let mut skipped = 0;
    for &i in candidates {
        if kept.len() == wanted {
            break;
        }
        if i >= x.numel() {
            return Err(domain_err!("index {i} out of range for {} elements", x.numel()));
        }
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + epsilon;
        let up = evaluate(&f, &probe)?;
        probe.data_mut()[i] = orig - epsilon;
        let down = evaluate(&f, &probe)?;
        probe.data_mut()[i] = orig;
        let forward = (up - centre) / epsilon;
        let backward = (centre - down) / epsilon;
        let scale = forward.abs().max(backward.abs()).max(1e-8);
        if (forward - backward).abs() > tolerance * scale {
            skipped += 1;
        } else {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    Ok((kept, skipped))
}

/// Maximum relative error over every element of `x`.
pub fn finite_difference_check<F>(f: F, x: &Tensor<f64>, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let all: Vec<usize> = (0..x.numel()).collect();
    finite_difference_check_at(f, x, epsilon, &all)
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_data(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("non-empty shape")
}

/// Values with magnitude in `[lo, hi)` and random sign.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let mut t = uniform(rng, shape, lo, hi);
    for v in t.data_mut() {
        if rng.random_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

/// `sum(w ⊙ y)` for fixed weights `w`, so every output element matters.
fn project(tape: &mut Tape<f64>, y: Var, w: &Tensor<f64>) -> Result<Var> {
    let wv = tape.constant(w.clone());
    let p = tape.mul(y, wv)?;
    let n = w.numel() as f64;
    let m = tape.mean(p)?;
    Ok(tape.scale(m, n))
}

type Op = Box<dyn Fn(&mut Tape<f64>, Var) -> Result<Var>>;

struct Case {
    name: String,
    x: Tensor<f64>,
    f: Op,
    tolerance: f64,
    /// Candidate order and number wanted; `None` checks every element.
    indices: Option<(Vec<usize>, usize)>,
}

impl Case {
    fn run(self) -> Result<CheckResult> {
        let (indices, skipped) = match self.indices {
            None => ((0..self.x.numel()).collect(), 0),
            Some((candidates, wanted)) => {
                smooth_indices(&self.f, &self.x, DEFAULT_EPSILON, &candidates, wanted, self.tolerance)?
            }
        };
        let err = finite_difference_check_at(&self.f, &self.x, DEFAULT_EPSILON, &indices)?;
        Ok(CheckResult {
            name: self.name,
            max_rel_error: err,
            tolerance: self.tolerance,
            elements: indices.len(),
            skipped,
        })
    }
}

/// A random candidate order over `0..n` and the number of elements wanted.
fn pick(rng: &mut ChaCha8Rng, n: usize, k: usize) -> (Vec<usize>, usize) {
    (sample(rng, n, n).into_vec(), k.min(n))
}

/// A unary op `x -> op(x)` checked through a random projection.
fn unary(rng: &mut ChaCha8Rng, name: &str, x: Tensor<f64>, out_shape: &[usize], op: fn(&mut Tape<f64>, Var) -> Result<Var>) -> Case {
    let w = away_from_zero(rng, out_shape, 0.5, 1.5);
    let indices = Some(pick(rng, x.numel(), 20));
    Case {
        name: name.into(),
        x,
        f: Box::new(move |t: &mut Tape<f64>, v: Var| {
            let y = op(t, v)?;
            project(t, y, &w)
        }),
        tolerance: OP_TOLERANCE,
        indices,
    }
}

/// A binary op checked with respect to one operand, the other held fixed.
fn binary(
    rng: &mut ChaCha8Rng,
    name: &str,
    x: Tensor<f64>,
    other: Tensor<f64>,
    x_first: bool,
    out_shape: &[usize],
    op: fn(&mut Tape<f64>, Var, Var) -> Result<Var>,
) -> Case {
    let w = away_from_zero(rng, out_shape, 0.5, 1.5);
    let indices = Some(pick(rng, x.numel(), 20));
    Case {
        name: name.into(),
        x,
        f: Box::new(move |t: &mut Tape<f64>, v: Var| {
            let o = t.constant(other.clone());
            let y = if x_first { op(t, v, o)? } else { op(t, o, v)? };
            project(t, y, &w)
        }),
        tolerance: OP_TOLERANCE,
        indices,
    }
}

fn op_cases(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let s = [2, 3, 4, 4];
    let mut cases = Vec::new();

    // Convolution with respect to each operand, two geometries.
    for (stride, pad) in [(1usize, 1usize), (2, 1), (1, 0)] {
        let x = uniform(rng, &[2, 3, 5, 5], -1.0, 1.0);
        let k = uniform(rng, &[4, 3, 3, 3], -1.0, 1.0);
        let b = uniform(rng, &[4], -1.0, 1.0);
        let out = (5 + 2 * pad - 3) / stride + 1;
        let w = away_from_zero(rng, &[2, 4, out, out], 0.5, 1.5);
        for which in 0..3 {
            let (xv, label) = match which {
                0 => (x.clone(), "input"),
                1 => (k.clone(), "kernel"),
                _ => (b.clone(), "bias"),
            };
            let (x, k, b, w) = (x.clone(), k.clone(), b.clone(), w.clone());
            let indices = Some(pick(rng, xv.numel(), 20));
            cases.push(Case {
                name: format!("conv2d/{label} stride={stride} pad={pad}"),
                x: xv,
                f: Box::new(move |t: &mut Tape<f64>, v: Var| {
                    let xi = if which == 0 { v } else { t.constant(x.clone()) };
                    let ki = if which == 1 { v } else { t.constant(k.clone()) };
                    let bi = if which == 2 { v } else { t.constant(b.clone()) };
                    let y = t.conv2d(xi, ki, Some(bi), stride, pad)?;
                    project(t, y, &w)
                }),
                tolerance: OP_TOLERANCE,
                indices,
            });
        }
    }

    let kinked = away_from_zero(rng, &s, 1e-3, 2.0);
    cases.push(unary(rng, "leaky_relu", kinked.clone(), &s, |t, v| t.leaky_relu(v, 0.2)));
    cases.push(unary(rng, "relu", kinked.clone(), &s, |t, v| t.relu(v)));
    cases.push(unary(rng, "abs", kinked, &s, |t, v| Ok(t.abs(v))));
    let x = uniform(rng, &s, -2.0, 2.0);
    cases.push(unary(rng, "sigmoid", x, &s, |t, v| Ok(t.sigmoid(v))));
    let x = uniform(rng, &s, -3.0, 3.0);
    cases.push(unary(rng, "softplus", x, &s, |t, v| Ok(t.softplus(v))));
    let x = uniform(rng, &s, -1.0, 1.0);
    cases.push(unary(rng, "scale", x, &s, |t, v| Ok(t.scale(v, -1.7))));
    let x = uniform(rng, &s, -1.0, 1.0);
    cases.push(unary(rng, "neg", x, &s, |t, v| Ok(t.neg(v))));
    let x = uniform(rng, &s, -1.0, 1.0);
    cases.push(unary(rng, "mean", x, &[1], |t, v| t.mean(v)));
    let x = uniform(rng, &s, -1.0, 1.0);
    cases.push(unary(rng, "upsample_nearest2x", x, &[2, 3, 8, 8], |t, v| {
        t.upsample_nearest2x(v)
    }));
    let x = uniform(rng, &s, -1.0, 1.0);
    cases.push(unary(rng, "avg_pool2x2", x, &[2, 3, 2, 2], |t, v| t.avg_pool2x2(v)));
    let x = uniform(rng, &s, -1.0, 1.0);
    cases.push(unary(rng, "global_avg_pool", x, &[2, 3, 1, 1], |t, v| {
        t.global_avg_pool(v)
    }));
    let x = uniform(rng, &s, -1.0, 1.0);
    cases.push(unary(rng, "reshape", x, &[6, 16], |t, v| t.reshape(v, &[6, 16])));
    let x = uniform(rng, &s, -1.0, 1.0);
    cases.push(unary(rng, "concat_channels", x, &[2, 9, 4, 4], |t, v| {
        let sq = t.mul(v, v)?;
        let twice = t.scale(v, 2.0);
        t.concat_channels(&[v, sq, twice])
    }));

    let a = uniform(rng, &s, -1.0, 1.0);
    let b = uniform(rng, &s, -1.0, 1.0);
    for (first, label) in [(true, "lhs"), (false, "rhs")] {
        let (x, o) = if first { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        cases.push(binary(rng, &format!("add/{label}"), x.clone(), o.clone(), first, &s, |t, p, q| t.add(p, q)));
        cases.push(binary(rng, &format!("sub/{label}"), x.clone(), o.clone(), first, &s, |t, p, q| t.sub(p, q)));
        cases.push(binary(rng, &format!("mul/{label}"), x, o, first, &s, |t, p, q| t.mul(p, q)));
    }
    let bias = uniform(rng, &[3], -1.0, 1.0);
    cases.push(binary(rng, "add_channel_bias/input", a.clone(), bias.clone(), true, &s, |t, p, q| t.add(p, q)));
    cases.push(binary(rng, "add_channel_bias/bias", bias, a.clone(), false, &s, |t, p, q| t.add(p, q)));
    let scalar = Tensor::scalar(0.37);
    cases.push(binary(rng, "sub_scalar/input", a.clone(), scalar.clone(), true, &s, |t, p, q| t.sub_scalar(p, q)));
    cases.push(binary(rng, "sub_scalar/scalar", scalar, a, false, &s, |t, p, q| t.sub_scalar(p, q)));
    cases
}

fn loss_cases(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let mut cases = Vec::new();
    let real = uniform(rng, &[4], -2.0, 2.0);
    let fake = uniform(rng, &[4], -2.0, 2.0);
    type LossFn = fn(&mut Tape<f64>, Var, Var) -> Result<Var>;
    let losses: [(&str, LossFn); 2] = [("d_loss", relativistic_d_loss), ("g_loss", relativistic_g_loss)];
    for (label, loss) in losses {
        for wrt_real in [true, false] {
            let (x, other) = if wrt_real { (real.clone(), fake.clone()) } else { (fake.clone(), real.clone()) };
            cases.push(Case {
                name: format!("{label}/{}", if wrt_real { "real_logits" } else { "fake_logits" }),
                x,
                f: Box::new(move |t: &mut Tape<f64>, v: Var| {
                    let o = t.constant(other.clone());
                    if wrt_real {
                        loss(t, v, o)
                    } else {
                        loss(t, o, v)
                    }
                }),
                tolerance: LOSS_TOLERANCE,
                indices: None,
            });
        }
    }
    let hr = uniform(rng, &[1, 3, 4, 4], 0.0, 1.0);
    let mut sr = uniform(rng, &[1, 3, 4, 4], 0.0, 1.0);
    for (s, h) in sr.data_mut().iter_mut().zip(hr.data()) {
        if (*s - h).abs() < 1e-3 {
            *s = h + 0.01;
        }
    }
    cases.push(Case {
        name: "pixel_l1".into(),
        x: sr,
        f: Box::new(move |t: &mut Tape<f64>, v: Var| {
            let h = t.constant(hr.clone());
            pixel_l1(t, v, h)
        }),
        tolerance: LOSS_TOLERANCE,
        indices: None,
    });
    cases
}

/// Tiny configurations used by the end-to-end checks.
pub fn tiny_arch() -> ArchConfig {
    ArchConfig { num_rrdb: 1, num_features: 8, growth_channels: 4, ..ArchConfig::default() }
}

pub fn tiny_disc() -> DiscConfig {
    DiscConfig { stages: 2, base_channels: 4, hidden: 6, input_size: 8, ..DiscConfig::default() }
}

pub fn tiny_features() -> FeatureNetSpec {
    FeatureNetSpec { channels: alloc::vec![4, 6, 8], downsample_after: alloc::vec![0], tap_layer: 2, seed: 7 }
}

/// One case per named parameter: `loss(params with that tensor perturbed)`.
fn parameter_cases<L>(rng: &mut ChaCha8Rng, prefix: &str, params: &Params<f64>, per_tensor: usize, loss: L) -> Vec<Case>
where
    L: Fn(&mut Tape<f64>, &crate::params::Bound) -> Result<Var> + Clone + 'static,
{
    params
        .iter()
        .map(|(name, value)| {
            let name_owned = String::from(name);
            let all = params.clone();
            let loss = loss.clone();
            Case {
                name: format!("{prefix}/{name}"),
                x: value.clone(),
                indices: Some(pick(rng, value.numel(), per_tensor)),
                f: Box::new(move |t: &mut Tape<f64>, v: Var| {
                    let mut bound = all.bind(t, false);
                    bound.rebind(&name_owned, v);
                    loss(t, &bound)
                }),
                tolerance: NETWORK_TOLERANCE,
            }
        })
        .collect()
}

fn network_cases(rng: &mut ChaCha8Rng) -> Result<Vec<Case>> {
    let mut cases = Vec::new();

    let arch = tiny_arch();
    let mut gen = GeneratorWeights::<f32>::init(arch, rng)?.cast::<f64>();
    // Full-gain dense blocks keep deep gradients well above cancellation
    // error; non-zero biases exercise every bias path.
    for (name, p) in gen.params.iter_mut() {
        if p.rank() == 1 {
            *p = uniform(rng, p.shape(), -0.1, 0.1);
        } else if name.starts_with("body.") {
            p.data_mut().iter_mut().for_each(|v| *v *= 10.0);
        }
    }
    let lr = uniform(rng, &[1, 3, 4, 4], 0.0, 1.0);
    let w = away_from_zero(rng, &[1, 3, 16, 16], 0.5, 1.5);
    let lr_in = lr.clone();
    cases.extend(parameter_cases(rng, "generator", &gen.params, 4, move |t, b| {
        let x = t.constant(lr_in.clone());
        let y = generator_forward(t, x, b, &arch)?;
        project(t, y, &w)
    }));
    let w = away_from_zero(rng, &[1, 3, 16, 16], 0.5, 1.5);
    let gp = gen.params.clone();
    cases.push(Case {
        name: "generator/input".into(),
        x: lr,
        indices: Some(pick(rng, 48, 12)),
        f: Box::new(move |t: &mut Tape<f64>, v: Var| {
            let b = gp.bind(t, false);
            let y = generator_forward(t, v, &b, &arch)?;
            project(t, y, &w)
        }),
        tolerance: NETWORK_TOLERANCE,
    });

    let dcfg = tiny_disc();
    let disc = DiscWeights::<f32>::init(dcfg, rng)?.cast::<f64>();
    let real = uniform(rng, &[2, 3, 8, 8], 0.0, 1.0);
    let fake = uniform(rng, &[2, 3, 8, 8], 0.0, 1.0);
    // Logits are projected rather than fed to the relativistic loss, which
    // is invariant to the final bias and would leave its gradient at zero.
    let r = real.clone();
    let w = away_from_zero(rng, &[2], 0.5, 1.5);
    cases.extend(parameter_cases(rng, "discriminator", &disc.params, 4, move |t, b| {
        let rv = t.constant(r.clone());
        let logits = discriminator_forward(t, rv, b, &dcfg)?;
        project(t, logits, &w)
    }));

    let spec = tiny_features();
    let features = FeatureNet::<f32>::from_seed(spec.clone())?.cast::<f64>();
    let dp = disc.params.clone();
    let hr = real;
    let sr = fake;
    let weights = LossWeights::default();
    cases.push(Case {
        name: "total_generator_loss/sr".into(),
        x: sr,
        indices: Some(pick(rng, 2 * 3 * 64, 24)),
        f: Box::new(move |t: &mut Tape<f64>, v: Var| {
            let db = dp.bind(t, false);
            let fb = features.bind(t);
            let h = t.constant(hr.clone());
            let rl = discriminator_forward(t, h, &db, &dcfg)?;
            let fl = discriminator_forward(t, v, &db, &dcfg)?;
            Ok(total_generator_loss(t, v, h, rl, fl, &fb, &spec, &weights)?.total)
        }),
        tolerance: NETWORK_TOLERANCE,
    });
    Ok(cases)
}

/// Every op, loss and tiny network, from a fixed seed.
pub fn run_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = rng_for(seed, 0x9c);
    let mut cases = op_cases(&mut rng);
    cases.extend(loss_cases(&mut rng));
    cases.extend(network_cases(&mut rng)?);
    cases.into_iter().map(Case::run).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_is_exact_to_roundoff() {
        let mut rng = rng_for(1, 1);
        let x = uniform(&mut rng, &[10], -1.0, 1.0);
        let e = finite_difference_check(|t, v| t.mean(v), &x, 1e-5).unwrap();
        assert!(e <= 1e-7, "{e}");
    }

    #[test]
    fn sigmoid_mean_within_tolerance() {
        let mut rng = rng_for(2, 1);
        let x = uniform(&mut rng, &[12], -2.0, 2.0);
        let e = finite_difference_check(
            |t, v| {
                let s = t.sigmoid(v);
                t.mean(s)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(e <= 1e-6, "{e}");
    }

    #[test]
    fn conv_mean_within_tolerance() {
        let mut rng = rng_for(3, 1);
        let x = uniform(&mut rng, &[1, 2, 5, 5], -1.0, 1.0);
        let k = uniform(&mut rng, &[3, 2, 3, 3], -1.0, 1.0);
        let e = finite_difference_check(
            move |t, v| {
                let kv = t.constant(k.clone());
                let y = t.conv2d(v, kv, None, 1, 1)?;
                t.mean(y)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(e <= 1e-6, "{e}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // At the kink the one-sided slope disagrees with the central difference.
        let x = Tensor::from_data(&[1], alloc::vec![0.0f64]).unwrap();
        let e = finite_difference_check(
            |t, v| {
                let a = t.leaky_relu(v, 0.2)?;
                t.mean(a)
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(e > 0.5);
    }

    #[test]
    fn smoothness_filter_only_rejects_kinks() {
        let x = Tensor::from_data(&[3], alloc::vec![0.0f64, 0.5, -0.7]).unwrap();
        let f = |t: &mut Tape<f64>, v: Var| {
            let a = t.leaky_relu(v, 0.2)?;
            t.mean(a)
        };
        let (kept, skipped) = smooth_indices(f, &x, 1e-6, &[0, 1, 2], 3, 1e-4).unwrap();
        assert_eq!((kept, skipped), (alloc::vec![1, 2], 1));
        let g = |t: &mut Tape<f64>, v: Var| {
            let a = t.sigmoid(v);
            t.mean(a)
        };
        let (kept, skipped) = smooth_indices(g, &x, 1e-6, &[2, 0, 1], 2, 1e-4).unwrap();
        assert_eq!((kept, skipped), (alloc::vec![0, 2], 0));
    }

    #[test]
    fn rejects_bad_epsilon() {
        let x = Tensor::from_data(&[1], alloc::vec![1.0f64]).unwrap();
        assert!(finite_difference_check(|t, v| t.mean(v), &x, 0.0).is_err());
    }
}
