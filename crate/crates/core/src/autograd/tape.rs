//! Tape-based reverse-mode differentiation.
//!
//! Operations append nodes to a [`Tape`]; a node may only reference nodes
//! recorded before it, so the tape order is a topological order and
//! [`Tape::backward`] is a single reverse sweep that visits each node once.

use std::rc::Rc;

use super::kernels::{self, ConvGeom};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Running statistics owned by a batch-normalization layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BnStats {
    pub const MOMENTUM: f64 = 0.1;
    pub const EPS: f64 = 1e-5;

    pub fn new(channels: usize) -> Self {
        BnStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            momentum: Self::MOMENTUM,
            eps: Self::EPS,
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sum(Var),
    LeakyRelu(Var, f64),
    TemperedSigmoid(Var, f64),
    Softplus(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    AvgPool2(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    PixelShuffle(Var, usize),
    Pad2d {
        x: Var,
        offsets: Vec<(usize, usize)>,
    },
    Reshape(Var),
    SegmentMse {
        pred: Var,
        target: Rc<Vec<f64>>,
        segments: Rc<Vec<u32>>,
        counts: Vec<usize>,
    },
}

/// Marks elements that belong to no segment in [`Tape::segment_mse`].
pub const NO_SEGMENT: u32 = u32::MAX;

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records a computation for later differentiation. Not shareable across
/// threads; build one tape per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable input (parameter or input under test).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// A constant: gradients are never propagated into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    /// Copies `v` into a fresh constant, cutting the graph.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push_raw(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push_raw(value, op, needs_grad)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("shapes checked")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let v = self.zip(a, b, |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let v = self.zip(a, b, |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let v = self.zip(a, b, |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "div")?;
        let v = self.zip(a, b, |x, y| x / y);
        Ok(self.push(v, Op::Div(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum::<f64>();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// `max(x, αx)`; the subgradient at exactly zero is α.
    pub fn leaky_relu(&mut self, a: Var, alpha: f64) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { alpha * x });
        self.push(v, Op::LeakyRelu(a, alpha), &[a])
    }

    /// `1 / (1 + exp(-T·x))`.
    pub fn tempered_sigmoid(&mut self, a: Var, temperature: f64) -> Result<Var> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::config(format!(
                "sigmoid temperature must be positive, got {temperature}"
            )));
        }
        let v = self.value(a).map(|x| sigmoid(temperature * x));
        Ok(self.push(v, Op::TemperedSigmoid(a, temperature), &[a]))
    }

    /// `ln(1 + exp(x))`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a), &[a])
    }

    /// Cross-correlation with zero padding. `w` is (Cout, Cin, kh, kw).
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (n, cin, h, wd) = self.value(x).dims4()?;
        let (cout, wcin, kh, kw) = self.value(w).dims4()?;
        if wcin != cin {
            return Err(Error::shape(format!(
                "conv2d: input has {cin} channels, weight expects {wcin}"
            )));
        }
        if stride == 0 {
            return Err(Error::shape("conv2d: stride must be >= 1"));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [cout] {
                return Err(Error::shape(format!(
                    "conv2d: bias shape {:?}, expected [{cout}]",
                    self.value(b).shape()
                )));
            }
        }
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(Error::shape(format!(
                "conv2d: {kh}x{kw} kernel does not fit {h}x{wd} input with pad {pad}"
            )));
        }
        let geom = ConvGeom {
            n,
            cin,
            h,
            w: wd,
            cout,
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (wd + 2 * pad - kw) / stride + 1,
        };
        let out = kernels::conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let value = Tensor::new(vec![n, cout, geom.ho, geom.wo], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(value, Op::Conv2d { x, w, b, geom }, &inputs))
    }

    /// 2×2 non-overlapping mean; H and W must be even.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(format!("avg_pool2 on odd dims {h}x{w}")));
        }
        let out = kernels::avg_pool2_forward(self.value(x).data(), n, c, h, w);
        let value = Tensor::new(vec![n, c, h / 2, w / 2], out)?;
        Ok(self.push(value, Op::AvgPool2(x), &[x]))
    }

    /// Per-channel normalization over (N, H, W). In training mode the batch
    /// statistics are used and folded into `stats` with its momentum;
    /// otherwise `stats` normalizes directly.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, stats: &mut BnStats, training: bool) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let m = n * h * w;
        if m == 0 {
            return Err(Error::shape("batch_norm on an empty batch"));
        }
        for (p, name) in [(gamma, "gamma"), (beta, "beta")] {
            if self.value(p).shape() != [c] {
                return Err(Error::shape(format!(
                    "batch_norm: {name} shape {:?}, expected [{c}]",
                    self.value(p).shape()
                )));
            }
        }
        if stats.mean.len() != c {
            return Err(Error::shape("batch_norm: running stats channel mismatch"));
        }
        let xs = self.value(x).data();
        let plane = h * w;
        let (mean, var): (Vec<f64>, Vec<f64>) = if training {
            (0..c)
                .map(|ch| {
                    let mut s = 0.0;
                    for b in 0..n {
                        s += xs[(b * c + ch) * plane..(b * c + ch + 1) * plane].iter().sum::<f64>();
                    }
                    let mu = s / m as f64;
                    let mut q = 0.0;
                    for b in 0..n {
                        q += xs[(b * c + ch) * plane..(b * c + ch + 1) * plane]
                            .iter()
                            .map(|&v| (v - mu) * (v - mu))
                            .sum::<f64>();
                    }
                    (mu, q / m as f64)
                })
                .unzip()
        } else {
            (stats.mean.clone(), stats.var.clone())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + stats.eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![0.0; xs.len()];
        let mut out = vec![0.0; xs.len()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * plane;
                for i in off..off + plane {
                    let xh = (xs[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = xh;
                    out[i] = g[ch] * xh + bt[ch];
                }
            }
        }
        if training {
            let unbias = if m > 1 { m as f64 / (m - 1) as f64 } else { 1.0 };
            for ch in 0..c {
                stats.mean[ch] = (1.0 - stats.momentum) * stats.mean[ch] + stats.momentum * mean[ch];
                stats.var[ch] = (1.0 - stats.momentum) * stats.var[ch] + stats.momentum * var[ch] * unbias;
            }
        }
        let value = Tensor::new(vec![n, c, h, w], out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: training,
            },
            &[x, gamma, beta],
        ))
    }

    /// Depth-to-space: (N, C·r², H, W) → (N, C, H·r, W·r), with
    /// `out[c, r·y+i, r·x+j] = in[c·r² + i·r + j, y, x]`.
    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if r == 0 || c % (r * r) != 0 {
            return Err(Error::shape(format!(
                "pixel_shuffle: {c} channels not divisible by {}",
                r * r
            )));
        }
        let co = c / (r * r);
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for_shuffle(n, co, h, w, r, |s, d| out[d] = src[s]);
        let value = Tensor::new(vec![n, co, h * r, w * r], out)?;
        Ok(self.push(value, Op::PixelShuffle(x, r), &[x]))
    }

    /// Zero padding on the spatial axes.
    pub fn pad2d(&mut self, x: Var, top: usize, bottom: usize, left: usize, right: usize) -> Result<Var> {
        let n = self.value(x).dims4()?.0;
        self.pad2d_each(x, &vec![[top, bottom, left, right]; n])
    }

    /// Zero padding with its own `[top, bottom, left, right]` per sample;
    /// every sample must end up the same size.
    pub fn pad2d_each(&mut self, x: Var, pads: &[[usize; 4]]) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if pads.len() != n {
            return Err(Error::shape(format!("pad2d: {} pads for batch of {n}", pads.len())));
        }
        let (hp, wp) = match pads.first() {
            Some(p) => (h + p[0] + p[1], w + p[2] + p[3]),
            None => (h, w),
        };
        if pads.iter().any(|p| (h + p[0] + p[1], w + p[2] + p[3]) != (hp, wp)) {
            return Err(Error::shape("pad2d: samples padded to different sizes"));
        }
        let src = self.value(x).data();
        let mut out = vec![0.0; n * c * hp * wp];
        for (b, pad) in pads.iter().enumerate() {
            for p in b * c..(b + 1) * c {
                for y in 0..h {
                    let s = &src[(p * h + y) * w..(p * h + y + 1) * w];
                    let d0 = (p * hp + y + pad[0]) * wp + pad[2];
                    out[d0..d0 + w].copy_from_slice(s);
                }
            }
        }
        let value = Tensor::new(vec![n, c, hp, wp], out)?;
        let offsets = pads.iter().map(|p| (p[0], p[2])).collect();
        Ok(self.push(value, Op::Pad2d { x, offsets }, &[x]))
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// Mean squared error of `pred` against a constant `target`, reduced per
    /// segment: element `i` contributes to output `segments[i]` unless it is
    /// [`NO_SEGMENT`]. Empty segments evaluate to zero.
    pub fn segment_mse(
        &mut self,
        pred: Var,
        target: Rc<Vec<f64>>,
        segments: Rc<Vec<u32>>,
        num_segments: usize,
    ) -> Result<Var> {
        let p = self.value(pred).data();
        if target.len() != p.len() || segments.len() != p.len() {
            return Err(Error::shape(format!(
                "segment_mse: pred has {} elements, target {}, segment map {}",
                p.len(),
                target.len(),
                segments.len()
            )));
        }
        let mut sums = vec![0.0; num_segments];
        let mut counts = vec![0usize; num_segments];
        for ((&pv, &tv), &s) in p.iter().zip(target.iter()).zip(segments.iter()) {
            if s == NO_SEGMENT {
                continue;
            }
            let s = s as usize;
            if s >= num_segments {
                return Err(Error::shape(format!(
                    "segment_mse: segment id {s} out of range {num_segments}"
                )));
            }
            sums[s] += (pv - tv) * (pv - tv);
            counts[s] += 1;
        }
        let out = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect();
        let value = Tensor::new(vec![num_segments], out)?;
        Ok(self.push(
            value,
            Op::SegmentMse {
                pred,
                target,
                segments,
                counts,
            },
            &[pred],
        ))
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward() needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
        }
        let leaves = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match node.op {
                Op::Leaf if node.needs_grad => Some(g.unwrap_or_else(|| vec![0.0; node.value.len()])),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads: leaves })
    }

    /// Accumulates an owned gradient, taking the buffer when the slot is empty.
    fn give(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(d) => add_into(d, &g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[i];
        let check = |v: Var| -> Result<()> {
            if v.0 >= i {
                return Err(Error::Internal(format!(
                    "node {i} references later node {}: graph is not acyclic",
                    v.0
                )));
            }
            Ok(())
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            &Op::Add(a, b) => {
                check(a)?;
                check(b)?;
                acc(a, &mut |d| add_into(d, g));
                acc(b, &mut |d| add_into(d, g));
            }
            &Op::Sub(a, b) => {
                check(a)?;
                check(b)?;
                acc(a, &mut |d| add_into(d, g));
                acc(b, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d -= g));
            }
            &Op::Mul(a, b) => {
                check(a)?;
                check(b)?;
                let (va, vb) = (val(a), val(b));
                acc(a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * vb[k];
                    }
                });
                acc(b, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * va[k];
                    }
                });
            }
            &Op::Div(a, b) => {
                check(a)?;
                check(b)?;
                let (va, vb) = (val(a), val(b));
                acc(a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] / vb[k];
                    }
                });
                acc(b, &mut |d| {
                    for k in 0..d.len() {
                        d[k] -= g[k] * va[k] / (vb[k] * vb[k]);
                    }
                });
            }
            &Op::Scale(a, c) => {
                check(a)?;
                acc(a, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += c * g));
            }
            &Op::AddScalar(a) => {
                check(a)?;
                acc(a, &mut |d| add_into(d, g));
            }
            &Op::Sum(a) => {
                check(a)?;
                let g0 = g[0];
                acc(a, &mut |d| d.iter_mut().for_each(|d| *d += g0));
            }
            &Op::LeakyRelu(a, alpha) => {
                check(a)?;
                let va = val(a);
                acc(a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += if va[k] > 0.0 { g[k] } else { alpha * g[k] };
                    }
                });
            }
            &Op::TemperedSigmoid(a, t) => {
                check(a)?;
                let y = node.value.data();
                acc(a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * t * y[k] * (1.0 - y[k]);
                    }
                });
            }
            &Op::Softplus(a) => {
                check(a)?;
                let va = val(a);
                acc(a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * sigmoid(va[k]);
                    }
                });
            }
            &Op::Conv2d { x, w, b, geom } => {
                check(x)?;
                check(w)?;
                let need_b = match b {
                    Some(b) => {
                        check(b)?;
                        self.nodes[b.0].needs_grad
                    }
                    None => false,
                };
                let cg = kernels::conv2d_backward(
                    val(x),
                    val(w),
                    g,
                    &geom,
                    (self.nodes[x.0].needs_grad, self.nodes[w.0].needs_grad, need_b),
                );
                if let Some(dx) = cg.dx {
                    self.give(grads, x, dx);
                }
                if let Some(dw) = cg.dw {
                    self.give(grads, w, dw);
                }
                if let (Some(b), Some(db)) = (b, cg.db) {
                    self.give(grads, b, db);
                }
            }
            &Op::AvgPool2(x) => {
                check(x)?;
                let (n, c, h, w) = self.nodes[x.0].value.dims4()?;
                let dx = kernels::avg_pool2_backward(g, n, c, h, w);
                self.give(grads, x, dx);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                check(x)?;
                check(gamma)?;
                check(beta)?;
                let (n, c, h, w) = self.nodes[x.0].value.dims4()?;
                let plane = h * w;
                let m = (n * plane) as f64;
                let gam = val(gamma);
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * plane;
                        for k in off..off + plane {
                            dgamma[ch] += g[k] * xhat[k];
                            dbeta[ch] += g[k];
                        }
                    }
                }
                acc(gamma, &mut |d| add_into(d, &dgamma));
                acc(beta, &mut |d| add_into(d, &dbeta));
                acc(x, &mut |d| {
                    for b in 0..n {
                        for ch in 0..c {
                            let off = (b * c + ch) * plane;
                            let s = gam[ch] * inv_std[ch];
                            if *batch_stats {
                                // dbeta = Σ dy, dgamma = Σ dy·x̂ per channel
                                let mean_dy = dbeta[ch] / m;
                                let mean_dyx = dgamma[ch] / m;
                                for k in off..off + plane {
                                    d[k] += s * (g[k] - mean_dy - xhat[k] * mean_dyx);
                                }
                            } else {
                                for k in off..off + plane {
                                    d[k] += s * g[k];
                                }
                            }
                        }
                    }
                });
            }
            &Op::PixelShuffle(x, r) => {
                check(x)?;
                let (n, c, h, w) = self.nodes[x.0].value.dims4()?;
                let co = c / (r * r);
                acc(x, &mut |d| for_shuffle(n, co, h, w, r, |s, dst| d[s] += g[dst]));
            }
            Op::Pad2d { x, offsets } => {
                let x = *x;
                check(x)?;
                let (_, c, h, w) = self.nodes[x.0].value.dims4()?;
                let (_, _, hp, wp) = node.value.dims4()?;
                acc(x, &mut |d| {
                    for (b, &(top, left)) in offsets.iter().enumerate() {
                        for p in b * c..(b + 1) * c {
                            for y in 0..h {
                                let s0 = (p * hp + y + top) * wp + left;
                                let d0 = (p * h + y) * w;
                                add_into(&mut d[d0..d0 + w], &g[s0..s0 + w]);
                            }
                        }
                    }
                });
            }
            &Op::Reshape(x) => {
                check(x)?;
                acc(x, &mut |d| add_into(d, g));
            }
            Op::SegmentMse {
                pred,
                target,
                segments,
                counts,
            } => {
                let pred = *pred;
                check(pred)?;
                let p = val(pred);
                acc(pred, &mut |d| {
                    for k in 0..d.len() {
                        let s = segments[k];
                        if s == NO_SEGMENT {
                            continue;
                        }
                        let s = s as usize;
                        d[k] += 2.0 * (p[k] - target[k]) / counts[s] as f64 * g[s];
                    }
                });
            }
        }
        Ok(())
    }
}

fn add_into(d: &mut [f64], g: &[f64]) {
    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
}

fn for_shuffle(n: usize, co: usize, h: usize, w: usize, r: usize, mut f: impl FnMut(usize, usize)) {
    let (ho, wo) = (h * r, w * r);
    for b in 0..n {
        for c in 0..co {
            for i in 0..r {
                for j in 0..r {
                    let cin = c * r * r + i * r + j;
                    for y in 0..h {
                        for x in 0..w {
                            let s = ((b * co * r * r + cin) * h + y) * w + x;
                            let d = ((b * co + c) * ho + r * y + i) * wo + r * x + j;
                            f(s, d);
                        }
                    }
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Gradients of a loss with respect to every differentiable leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// `None` for constants and intermediate nodes.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
