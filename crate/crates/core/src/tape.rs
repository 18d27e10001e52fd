//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] is an append-only list of nodes. Leaves hold caller-supplied
//! tensors; every other node records the operation that produced it and the
//! [`Var`]s it read. Because a node can only refer to nodes created before it,
//! the list is always in topological order and [`Tape::backward`] is a single
//! reverse sweep that visits each node at most once.
//!
//! Gradients of intermediate nodes are discarded after the sweep. Leaves
//! created with `requires_grad = true` keep an accumulated gradient buffer,
//! so calling `backward` twice without [`Tape::zero_grad`] sums the results.

use alloc::vec;
use alloc::vec::Vec;

use crate::conv::{self, ConvGeom};
use crate::error::{domain_err, shape_err, Result};
use crate::real::Real;
use crate::tensor::{check_shape, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Conv2d { input: Var, kernel: Var, bias: Option<Var>, stride: usize, padding: usize },
    LeakyRelu { input: Var, slope: T },
    Sigmoid { input: Var },
    Softplus { input: Var },
    Upsample2x { input: Var },
    Add { a: Var, b: Var },
    AddChannelBias { input: Var, bias: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { input: Var, factor: T },
    SubScalar { input: Var, scalar: Var },
    Mean { input: Var },
    Abs { input: Var },
    ConcatChannels { inputs: Vec<Var> },
    AvgPool2x2 { input: Var },
    GlobalAvgPool { input: Var },
    Reshape { input: Var },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// Recording context for one forward/backward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Only leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: requires_grad, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Shorthand for [`Tensor::from_data`] followed by [`Tape::leaf`].
    pub fn tensor(&mut self, shape: &[usize], values: Vec<T>, requires_grad: bool) -> Result<Var> {
        Ok(self.leaf(Tensor::from_data(shape, values)?, requires_grad))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, absent before the first backward pass.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor<T>> {
        let node = &self.nodes[v.0];
        let g = node.grad.as_ref()?;
        Some(Tensor::from_slice(node.value.shape(), g).expect("gradient shape"))
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            if let Some(g) = node.grad.as_mut() {
                g.fill(T::zero());
            }
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad, requires_grad: false, grad: None });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, input: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::from_data(x.shape(), data).expect("same shape");
        self.push(value, op, &[input])
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err!("{what}: shapes {:?} and {:?} differ", sa, sb));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let value = Tensor::from_data(x.shape(), data).expect("same shape");
        self.push(value, op, &[a, b])
    }

    /// 2-D cross-correlation with zero padding.
    ///
    /// `input` is `[n, cin, h, w]`, `kernel` is `[cout, cin, kh, kw]` and the
    /// optional `bias` is `[cout]`. The output is `[n, cout, oh, ow]` with
    /// `oh = (h + 2 * padding - kh) / stride + 1`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let geom = self.conv_geom(input, kernel, bias, stride, padding)?;
        let mut out = vec![T::zero(); geom.n * geom.cout * geom.oh * geom.ow];
        conv::forward(
            &geom,
            self.value(input).data(),
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
            &mut out,
        );
        let value = Tensor::from_data(&[geom.n, geom.cout, geom.oh, geom.ow], out)?;
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        Ok(self.push(value, Op::Conv2d { input, kernel, bias, stride, padding }, &inputs))
    }

    fn conv_geom(&self, input: Var, kernel: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<ConvGeom> {
        let (n, cin, h, w) = self.value(input).dims4()?;
        let (cout, kcin, kh, kw) = self.value(kernel).dims4()?;
        if kcin != cin {
            return Err(shape_err!("conv2d: input has {cin} channels but kernel expects {kcin}"));
        }
        if stride == 0 {
            return Err(shape_err!("conv2d: stride must be at least 1"));
        }
        if let Some(b) = bias {
            if self.value(b).shape() != [cout] {
                return Err(shape_err!("conv2d: bias shape {:?}, expected [{cout}]", self.value(b).shape()));
            }
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(shape_err!("conv2d: {kh}x{kw} kernel does not fit {h}x{w} input with padding {pad}"));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        Ok(ConvGeom { n, cin, h, w, cout, kh, kw, stride, pad, oh, ow })
    }

    /// `max(x, slope * x)`; the derivative at exactly zero is taken as `slope`.
    pub fn leaky_relu(&mut self, input: Var, slope: T) -> Result<Var> {
        if !(slope >= T::zero() && slope < T::one()) {
            return Err(domain_err!("leaky_relu slope {slope} outside [0, 1)"));
        }
        Ok(self.unary(input, Op::LeakyRelu { input, slope }, |v| if v > T::zero() { v } else { v * slope }))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        self.leaky_relu(input, T::zero())
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.unary(input, Op::Sigmoid { input }, sigmoid)
    }

    /// `ln(1 + e^x)`, evaluated without overflow for large `|x|`.
    pub fn softplus(&mut self, input: Var) -> Var {
        self.unary(input, Op::Softplus { input }, softplus)
    }

    /// Replicates every pixel of an NCHW tensor into a 2x2 block.
    pub fn upsample_nearest2x(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let (n, c, h, w) = x.dims4()?;
        let mut out = vec![T::zero(); n * c * 4 * h * w];
        for (plane, dst) in x.data().chunks_exact(h * w).zip(out.chunks_exact_mut(4 * h * w)) {
            for y in 0..h {
                for xx in 0..w {
                    let v = plane[y * w + xx];
                    let base = 2 * y * 2 * w + 2 * xx;
                    dst[base] = v;
                    dst[base + 1] = v;
                    dst[base + 2 * w] = v;
                    dst[base + 2 * w + 1] = v;
                }
            }
        }
        let value = Tensor::from_data(&[n, c, 2 * h, 2 * w], out)?;
        Ok(self.push(value, Op::Upsample2x { input }, &[input]))
    }

    /// Elementwise sum. A `[c]` right operand is broadcast as a per-channel
    /// bias over an `[n, c, h, w]` left operand; no other broadcasting exists.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            return Ok(self.binary(a, b, Op::Add { a, b }, |p, q| p + q));
        }
        if sa.len() == 4 && sb.len() == 1 && sa[1] == sb[0] {
            let x = self.value(a);
            let bias = self.value(b).data();
            let plane = sa[2] * sa[3];
            let c = sa[1];
            let mut data = x.data().to_vec();
            for (i, chunk) in data.chunks_exact_mut(plane).enumerate() {
                let bv = bias[i % c];
                chunk.iter_mut().for_each(|v| *v += bv);
            }
            let value = Tensor::from_data(sa, data)?;
            return Ok(self.push(value, Op::AddChannelBias { input: a, bias: b }, &[a, b]));
        }
        Err(shape_err!("add: incompatible shapes {:?} and {:?}", sa, sb))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.binary(a, b, Op::Sub { a, b }, |p, q| p - q))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.binary(a, b, Op::Mul { a, b }, |p, q| p * q))
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Var {
        self.unary(input, Op::Scale { input, factor }, |v| v * factor)
    }

    pub fn neg(&mut self, input: Var) -> Var {
        self.scale(input, -T::one())
    }

    /// `x - s` for a one-element `s`.
    pub fn sub_scalar(&mut self, input: Var, scalar: Var) -> Result<Var> {
        let s = self
            .value(scalar)
            .item()
            .ok_or_else(|| shape_err!("sub_scalar: {:?} is not a scalar", self.value(scalar).shape()))?;
        let x = self.value(input);
        let value = Tensor::from_data(x.shape(), x.data().iter().map(|&v| v - s).collect())?;
        Ok(self.push(value, Op::SubScalar { input, scalar }, &[input, scalar]))
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        if x.numel() == 0 {
            return Err(domain_err!("mean of an empty tensor"));
        }
        let m = mean(x.data());
        Ok(self.push(Tensor::scalar(m), Op::Mean { input }, &[input]))
    }

    /// `|x|`; the derivative at zero is zero.
    pub fn abs(&mut self, input: Var) -> Var {
        self.unary(input, Op::Abs { input }, |v| v.abs())
    }

    /// Concatenates NCHW tensors with equal `n, h, w` along channels.
    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| shape_err!("concat of zero tensors"))?;
        let (n, _, h, w) = self.value(first).dims4()?;
        let mut channels = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let (n2, c, h2, w2) = self.value(v).dims4()?;
            if (n2, h2, w2) != (n, h, w) {
                return Err(shape_err!(
                    "concat: {:?} does not match {:?}",
                    self.value(v).shape(),
                    self.value(first).shape()
                ));
            }
            channels.push(c);
        }
        let total: usize = channels.iter().sum();
        let plane = h * w;
        let mut out = Vec::with_capacity(n * total * plane);
        for s in 0..n {
            for (&v, &c) in inputs.iter().zip(&channels) {
                out.extend_from_slice(&self.value(v).data()[s * c * plane..(s + 1) * c * plane]);
            }
        }
        let value = Tensor::from_data(&[n, total, h, w], out)?;
        Ok(self.push(value, Op::ConcatChannels { inputs: inputs.to_vec() }, inputs))
    }

    /// Non-overlapping 2x2 average pooling; spatial dims must be even.
    pub fn avg_pool2x2(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let (n, c, h, w) = x.dims4()?;
        if h % 2 != 0 || w % 2 != 0 || h < 2 || w < 2 {
            return Err(shape_err!("avg_pool2x2 needs even spatial dims, got {h}x{w}"));
        }
        let (oh, ow) = (h / 2, w / 2);
        let quarter = T::from_f64_lossy(0.25);
        let mut out = vec![T::zero(); n * c * oh * ow];
        for (src, dst) in x.data().chunks_exact(h * w).zip(out.chunks_exact_mut(oh * ow)) {
            for y in 0..oh {
                for xx in 0..ow {
                    let i = 2 * y * w + 2 * xx;
                    dst[y * ow + xx] = (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]) * quarter;
                }
            }
        }
        let value = Tensor::from_data(&[n, c, oh, ow], out)?;
        Ok(self.push(value, Op::AvgPool2x2 { input }, &[input]))
    }

    /// Spatial mean per channel: `[n, c, h, w] -> [n, c, 1, 1]`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let (n, c, h, w) = x.dims4()?;
        let out = x.data().chunks_exact(h * w).map(mean).collect();
        let value = Tensor::from_data(&[n, c, 1, 1], out)?;
        Ok(self.push(value, Op::GlobalAvgPool { input }, &[input]))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        check_shape(shape)?;
        let value = self.value(input).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape { input }, &[input]))
    }

    /// Back-propagates from a one-element `loss`, accumulating into the
    /// gradient buffer of every `requires_grad` leaf. Leaves that `loss` does
    /// not depend on end up with a zero gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(domain_err!("backward needs a scalar loss, got shape {:?}", self.value(loss).shape()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                match node.grad.as_mut() {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }

        for node in &mut self.nodes {
            if node.requires_grad && node.grad.is_none() {
                node.grad = Some(vec![T::zero(); node.value.numel()]);
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            &Op::Conv2d { input, kernel, bias, stride, padding } => {
                let geom = self.conv_geom(input, kernel, bias, stride, padding).expect("recorded conv");
                let mut gi = self.wants(input).then(|| vec![T::zero(); self.value(input).numel()]);
                let mut gk = self.wants(kernel).then(|| vec![T::zero(); self.value(kernel).numel()]);
                let mut gb = bias.filter(|&b| self.wants(b)).map(|_| vec![T::zero(); geom.cout]);
                conv::backward(
                    &geom,
                    self.value(input).data(),
                    self.value(kernel).data(),
                    g,
                    gi.as_deref_mut(),
                    gk.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                if let Some(v) = gi {
                    accumulate(grads, input, v);
                }
                if let Some(v) = gk {
                    accumulate(grads, kernel, v);
                }
                if let (Some(b), Some(v)) = (bias, gb) {
                    accumulate(grads, b, v);
                }
            }
            &Op::LeakyRelu { input, slope } => {
                let x = self.value(input).data();
                let d = x.iter().zip(g).map(|(&v, &gv)| if v > T::zero() { gv } else { gv * slope }).collect();
                accumulate(grads, input, d);
            }
            &Op::Sigmoid { input } => {
                let d = out.iter().zip(g).map(|(&s, &gv)| gv * s * (T::one() - s)).collect();
                accumulate(grads, input, d);
            }
            &Op::Softplus { input } => {
                let x = self.value(input).data();
                let d = x.iter().zip(g).map(|(&v, &gv)| gv * sigmoid(v)).collect();
                accumulate(grads, input, d);
            }
            &Op::Upsample2x { input } => {
                let (n, c, h, w) = self.value(input).dims4().expect("4-D");
                let mut d = vec![T::zero(); n * c * h * w];
                for (src, dst) in g.chunks_exact(4 * h * w).zip(d.chunks_exact_mut(h * w)) {
                    for y in 0..h {
                        for x in 0..w {
                            let base = 2 * y * 2 * w + 2 * x;
                            dst[y * w + x] = src[base] + src[base + 1] + src[base + 2 * w] + src[base + 2 * w + 1];
                        }
                    }
                }
                accumulate(grads, input, d);
            }
            &Op::Add { a, b } => {
                if self.wants(a) {
                    accumulate(grads, a, g.to_vec());
                }
                if self.wants(b) {
                    accumulate(grads, b, g.to_vec());
                }
            }
            &Op::AddChannelBias { input, bias } => {
                if self.wants(input) {
                    accumulate(grads, input, g.to_vec());
                }
                if self.wants(bias) {
                    let (_, c, h, w) = node.value.dims4().expect("4-D");
                    let mut d = vec![T::zero(); c];
                    for (k, chunk) in g.chunks_exact(h * w).enumerate() {
                        d[k % c] += chunk.iter().copied().sum::<T>();
                    }
                    accumulate(grads, bias, d);
                }
            }
            &Op::Sub { a, b } => {
                if self.wants(a) {
                    accumulate(grads, a, g.to_vec());
                }
                if self.wants(b) {
                    accumulate(grads, b, g.iter().map(|&v| -v).collect());
                }
            }
            &Op::Mul { a, b } => {
                let (x, y) = (self.value(a).data(), self.value(b).data());
                if self.wants(a) {
                    accumulate(grads, a, g.iter().zip(y).map(|(&gv, &q)| gv * q).collect());
                }
                if self.wants(b) {
                    accumulate(grads, b, g.iter().zip(x).map(|(&gv, &p)| gv * p).collect());
                }
            }
            &Op::Scale { input, factor } => {
                accumulate(grads, input, g.iter().map(|&v| v * factor).collect());
            }
            &Op::SubScalar { input, scalar } => {
                if self.wants(input) {
                    accumulate(grads, input, g.to_vec());
                }
                if self.wants(scalar) {
                    accumulate(grads, scalar, vec![-g.iter().copied().sum::<T>()]);
                }
            }
            &Op::Mean { input } => {
                let n = self.value(input).numel();
                let share = g[0] / T::from_usize(n).expect("element count");
                accumulate(grads, input, vec![share; n]);
            }
            &Op::Abs { input } => {
                let x = self.value(input).data();
                let d = x
                    .iter()
                    .zip(g)
                    .map(|(&v, &gv)| {
                        if v > T::zero() {
                            gv
                        } else if v < T::zero() {
                            -gv
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                accumulate(grads, input, d);
            }
            Op::ConcatChannels { inputs } => {
                let (n, total, h, w) = node.value.dims4().expect("4-D");
                let plane = h * w;
                let mut offset = 0;
                for &v in inputs {
                    let c = self.value(v).shape()[1];
                    if self.wants(v) {
                        let mut d = Vec::with_capacity(n * c * plane);
                        for s in 0..n {
                            let start = (s * total + offset) * plane;
                            d.extend_from_slice(&g[start..start + c * plane]);
                        }
                        accumulate(grads, v, d);
                    }
                    offset += c;
                }
            }
            &Op::AvgPool2x2 { input } => {
                let (n, c, h, w) = self.value(input).dims4().expect("4-D");
                let (oh, ow) = (h / 2, w / 2);
                let quarter = T::from_f64_lossy(0.25);
                let mut d = vec![T::zero(); n * c * h * w];
                for (src, dst) in g.chunks_exact(oh * ow).zip(d.chunks_exact_mut(h * w)) {
                    for y in 0..oh {
                        for x in 0..ow {
                            let v = src[y * ow + x] * quarter;
                            let i = 2 * y * w + 2 * x;
                            dst[i] = v;
                            dst[i + 1] = v;
                            dst[i + w] = v;
                            dst[i + w + 1] = v;
                        }
                    }
                }
                accumulate(grads, input, d);
            }
            &Op::GlobalAvgPool { input } => {
                let (_, _, h, w) = self.value(input).dims4().expect("4-D");
                let inv = T::one() / T::from_usize(h * w).expect("plane size");
                let mut d = Vec::with_capacity(self.value(input).numel());
                for &gv in g {
                    d.extend(core::iter::repeat_n(gv * inv, h * w));
                }
                accumulate(grads, input, d);
            }
            &Op::Reshape { input } => {
                accumulate(grads, input, g.to_vec());
            }
        }
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, contribution: Vec<T>) {
    match grads[v.0].as_mut() {
        Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, &b)| *a += b),
        None => grads[v.0] = Some(contribution),
    }
}

pub(crate) fn mean<T: Real>(values: &[T]) -> T {
    // Summed in f64 so the f32 path does not drift on large planes.
    let s: f64 = values.iter().map(|v| v.as_f64()).sum();
    T::from_f64_lossy(s / values.len() as f64)
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}
