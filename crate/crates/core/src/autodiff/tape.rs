use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{mismatch, Tensor};
use crate::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d { input: Var, kernel: Var, stride: usize },
    Activation { input: Var, kind: Activation },
    Add { lhs: Var, rhs: Var },
    SumN { inputs: Vec<Var> },
    ScaleConst { input: Var, factor: f64 },
    ScaleBy { input: Var, scalar: Var },
    MeanOver { input: Var, axes: Vec<usize> },
    SumAll { input: Var },
    Mse { prediction: Var, target: Var },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Records tensor operations for reverse-mode differentiation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of [`Tape::backward`]: one gradient slot per recorded node.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the root w.r.t. `var`; zeros if `var` was not reached.
    pub fn get(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => Tensor::from_parts(self.shapes[var.0].clone(), vec![0.0; self.shapes[var.0].iter().product()]),
        }
    }

    /// Like [`Gradients::get`] but without materializing zeros.
    pub fn get_ref(&self, var: Var) -> Option<&Tensor> {
        self.grads[var.0].as_ref()
    }
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

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, value, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.rg(var)
    }

    /// A differentiable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// Identity that always requires a gradient, so `backward` reports the
    /// gradient at this point even when everything upstream is constant.
    pub fn watch(&mut self, input: Var) -> Var {
        let value = self.value(input).clone();
        self.push(Op::Activation { input, kind: Activation::Identity }, value, true)
    }

    /// Valid (unpadded) 2-D convolution.
    ///
    /// `input` is `[N, H, W, C_in]` or `[H, W, C_in]`, `kernel` is
    /// `[KH, KW, C_in, C_out]`; the output keeps the input's rank.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize) -> Result<Var> {
        let x = self.value(input);
        let k = self.value(kernel);
        let geom = ConvGeom::new(x.shape(), k.shape(), stride)?;
        let out = geom.forward(x.data(), k.data());
        let mut shape = vec![geom.oh, geom.ow, geom.cout];
        if x.shape().len() == 4 {
            shape.insert(0, geom.n);
        }
        let rg = self.rg(input) || self.rg(kernel);
        Ok(self.push(Op::Conv2d { input, kernel, stride }, Tensor::from_parts(shape, out), rg))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let x = self.value(input);
        let value = match kind {
            Activation::Tanh => Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&v| libm::tanh(v)).collect()),
            Activation::Identity => x.clone(),
        };
        let rg = self.rg(input);
        self.push(Op::Activation { input, kind }, value, rg)
    }

    pub fn tanh(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Tanh)
    }

    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (a, b) = (self.value(lhs), self.value(rhs));
        if a.shape() != b.shape() {
            return Err(mismatch("add", a.shape(), b.shape()));
        }
        let mut value = a.clone();
        value.add_assign(b);
        let rg = self.rg(lhs) || self.rg(rhs);
        Ok(self.push(Op::Add { lhs, rhs }, value, rg))
    }

    /// Elementwise sum of one or more same-shaped tensors.
    pub fn sum_n(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| Error::ShapeMismatch { op: "sum_n", detail: "no inputs".into() })?;
        let mut value = self.value(first).clone();
        for &v in &inputs[1..] {
            let t = self.value(v);
            if t.shape() != value.shape() {
                return Err(mismatch("sum_n", value.shape(), t.shape()));
            }
            value.add_assign(t);
        }
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(Op::SumN { inputs: inputs.to_vec() }, value, rg))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        let x = self.value(input);
        let value = Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|v| v * factor).collect());
        let rg = self.rg(input);
        self.push(Op::ScaleConst { input, factor }, value, rg)
    }

    /// Multiplies `input` by the single value held in `scalar`.
    pub fn scale_by(&mut self, input: Var, scalar: Var) -> Result<Var> {
        let s = self.value(scalar).item().ok_or_else(|| Error::ShapeMismatch {
            op: "scale_by",
            detail: format!("scale must have one element, got shape {:?}", self.value(scalar).shape()),
        })?;
        let x = self.value(input);
        let value = Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|v| v * s).collect());
        let rg = self.rg(input) || self.rg(scalar);
        Ok(self.push(Op::ScaleBy { input, scalar }, value, rg))
    }

    /// Mean over the listed axes; reduced axes are kept with extent 1.
    pub fn mean_over(&mut self, input: Var, axes: &[usize]) -> Result<Var> {
        let x = self.value(input);
        let rank = x.shape().len();
        let mut reduce = [false; 4];
        for &a in axes {
            if a >= rank {
                return Err(Error::ShapeMismatch {
                    op: "mean_over",
                    detail: format!("axis {a} out of range for shape {:?}", x.shape()),
                });
            }
            reduce[a] = true;
        }
        let out_shape: Vec<usize> = x.shape().iter().enumerate().map(|(i, &e)| if reduce[i] { 1 } else { e }).collect();
        let count: usize = x.shape().iter().enumerate().filter(|(i, _)| reduce[*i]).map(|(_, &e)| e).product();
        let mut out = vec![0.0; out_shape.iter().product()];
        let in_strides = strides(x.shape());
        let out_strides = strides(&out_shape);
        for (flat, &v) in x.data().iter().enumerate() {
            out[reduced_index(flat, &in_strides, &out_strides, &reduce[..rank])] += v;
        }
        let inv = 1.0 / count as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        let rg = self.rg(input);
        Ok(self.push(Op::MeanOver { input, axes: axes.to_vec() }, Tensor::from_parts(out_shape, out), rg))
    }

    pub fn sum_all(&mut self, input: Var) -> Var {
        let s = self.value(input).sum();
        let rg = self.rg(input);
        self.push(Op::SumAll { input }, Tensor::scalar(s), rg)
    }

    /// Mean of squared elementwise differences.
    pub fn mse(&mut self, prediction: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(prediction), self.value(target));
        if p.shape() != t.shape() {
            return Err(mismatch("mse", p.shape(), t.shape()));
        }
        let n = p.len() as f64;
        let loss = p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        let rg = self.rg(prediction) || self.rg(target);
        Ok(self.push(Op::Mse { prediction, target }, Tensor::scalar(loss), rg))
    }

    /// Gradients of the scalar `root` with respect to every recorded node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_value = self.value(root);
        if root_value.len() != 1 {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if self.rg(root) {
            grads[root.0] = Some(Tensor::from_parts(root_value.shape().to_vec(), vec![1.0]));
        }
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, kernel, stride } => {
                let x = self.value(*input);
                let k = self.value(*kernel);
                let geom = ConvGeom::new(x.shape(), k.shape(), *stride).expect("validated in forward");
                if self.rg(*input) {
                    let gx = geom.grad_input(g.data(), k.data());
                    accumulate(grads, *input, Tensor::from_parts(x.shape().to_vec(), gx));
                }
                if self.rg(*kernel) {
                    let gk = geom.grad_kernel(g.data(), x.data());
                    accumulate(grads, *kernel, Tensor::from_parts(k.shape().to_vec(), gk));
                }
            }
            Op::Activation { input, kind } => {
                if !self.rg(*input) {
                    return;
                }
                let gx = match kind {
                    Activation::Identity => g.clone(),
                    Activation::Tanh => Tensor::from_parts(
                        g.shape().to_vec(),
                        g.data().iter().zip(node.value.data()).map(|(gi, y)| gi * (1.0 - y * y)).collect(),
                    ),
                };
                accumulate(grads, *input, gx);
            }
            Op::Add { lhs, rhs } => {
                for v in [*lhs, *rhs] {
                    if self.rg(v) {
                        accumulate(grads, v, g.clone());
                    }
                }
            }
            Op::SumN { inputs } => {
                for &v in inputs {
                    if self.rg(v) {
                        accumulate(grads, v, g.clone());
                    }
                }
            }
            Op::ScaleConst { input, factor } => {
                if self.rg(*input) {
                    let gx = Tensor::from_parts(g.shape().to_vec(), g.data().iter().map(|v| v * factor).collect());
                    accumulate(grads, *input, gx);
                }
            }
            Op::ScaleBy { input, scalar } => {
                let x = self.value(*input);
                let s = self.value(*scalar).data()[0];
                if self.rg(*input) {
                    let gx = Tensor::from_parts(g.shape().to_vec(), g.data().iter().map(|v| v * s).collect());
                    accumulate(grads, *input, gx);
                }
                if self.rg(*scalar) {
                    let gs: f64 = g.data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
                    let shape = self.value(*scalar).shape().to_vec();
                    accumulate(grads, *scalar, Tensor::from_parts(shape, vec![gs]));
                }
            }
            Op::MeanOver { input, axes } => {
                if !self.rg(*input) {
                    return;
                }
                let x = self.value(*input);
                let rank = x.shape().len();
                let mut reduce = [false; 4];
                axes.iter().for_each(|&a| reduce[a] = true);
                let count: usize = x.shape().iter().enumerate().filter(|(i, _)| reduce[*i]).map(|(_, &e)| e).product();
                let inv = 1.0 / count as f64;
                let in_strides = strides(x.shape());
                let out_strides = strides(g.shape());
                let gx = (0..x.len())
                    .map(|flat| g.data()[reduced_index(flat, &in_strides, &out_strides, &reduce[..rank])] * inv)
                    .collect();
                accumulate(grads, *input, Tensor::from_parts(x.shape().to_vec(), gx));
            }
            Op::SumAll { input } => {
                if self.rg(*input) {
                    let x = self.value(*input);
                    accumulate(grads, *input, Tensor::from_parts(x.shape().to_vec(), vec![g.data()[0]; x.len()]));
                }
            }
            Op::Mse { prediction, target } => {
                let (p, t) = (self.value(*prediction), self.value(*target));
                let scale = 2.0 * g.data()[0] / p.len() as f64;
                let diff: Vec<f64> = p.data().iter().zip(t.data()).map(|(a, b)| scale * (a - b)).collect();
                if self.rg(*target) {
                    let gt = Tensor::from_parts(t.shape().to_vec(), diff.iter().map(|d| -d).collect());
                    accumulate(grads, *target, gt);
                }
                if self.rg(*prediction) {
                    accumulate(grads, *prediction, Tensor::from_parts(p.shape().to_vec(), diff));
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], var: Var, g: Tensor) {
    match &mut grads[var.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn strides(shape: &[usize]) -> [usize; 4] {
    let mut s = [0; 4];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        s[i] = acc;
        acc *= shape[i];
    }
    s
}

fn reduced_index(flat: usize, in_strides: &[usize; 4], out_strides: &[usize; 4], reduce: &[bool]) -> usize {
    let mut rem = flat;
    let mut out = 0;
    for (axis, &r) in reduce.iter().enumerate() {
        let coord = rem / in_strides[axis];
        rem %= in_strides[axis];
        if !r {
            out += coord * out_strides[axis];
        }
    }
    out
}

struct ConvGeom {
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    stride: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new(x: &[usize], k: &[usize], stride: usize) -> Result<Self> {
        let err = |detail| Error::ShapeMismatch { op: "conv2d", detail };
        let (n, h, w, cin) = match *x {
            [n, h, w, c] => (n, h, w, c),
            [h, w, c] => (1, h, w, c),
            _ => return Err(err(format!("input must be [N,H,W,C] or [H,W,C], got {x:?}"))),
        };
        let [kh, kw, kcin, cout] = *k else {
            return Err(err(format!("kernel must be [KH,KW,C_in,C_out], got {k:?}")));
        };
        if kcin != cin {
            return Err(err(format!("input has {cin} channels, kernel expects {kcin}")));
        }
        if stride == 0 {
            return Err(err("stride must be positive".into()));
        }
        if h < kh || w < kw {
            return Err(err(format!("input {h}x{w} smaller than kernel {kh}x{kw}")));
        }
        Ok(Self { n, h, w, cin, kh, kw, cout, stride, oh: (h - kh) / stride + 1, ow: (w - kw) / stride + 1 })
    }

    /// Input position feeding output `(oy, ox)` through tap `(ky, kx)`.
    #[inline]
    fn in_pos(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> usize {
        ((oy * self.stride + ky) * self.w + ox * self.stride + kx) * self.cin
    }

    // The kernels below work on batch-last copies, so every tap is a
    // contiguous multiply-add over the batch. Each output still sums its
    // taps in the same fixed order.

    fn forward(&self, x: &[f64], k: &[f64]) -> Vec<f64> {
        let n = self.n;
        let xt = batch_last(x, n);
        let mut ot = vec![0.0; self.oh * self.ow * self.cout * n];
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let o = (oy * self.ow + ox) * self.cout;
                for ky in 0..self.kh {
                    for kx in 0..self.kw {
                        let ip = self.in_pos(oy, ox, ky, kx);
                        let kp = (ky * self.kw + kx) * self.cin;
                        for ci in 0..self.cin {
                            let xs = &xt[(ip + ci) * n..(ip + ci + 1) * n];
                            let kr = &k[(kp + ci) * self.cout..(kp + ci + 1) * self.cout];
                            for (co, &kv) in kr.iter().enumerate() {
                                axpy(&mut ot[(o + co) * n..(o + co + 1) * n], kv, xs);
                            }
                        }
                    }
                }
            }
        }
        batch_first(&ot, n)
    }

    fn grad_input(&self, g: &[f64], k: &[f64]) -> Vec<f64> {
        let n = self.n;
        let gt = batch_last(g, n);
        let mut gxt = vec![0.0; self.h * self.w * self.cin * n];
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let o = (oy * self.ow + ox) * self.cout;
                for ky in 0..self.kh {
                    for kx in 0..self.kw {
                        let ip = self.in_pos(oy, ox, ky, kx);
                        let kp = (ky * self.kw + kx) * self.cin;
                        for ci in 0..self.cin {
                            let gx = &mut gxt[(ip + ci) * n..(ip + ci + 1) * n];
                            let kr = &k[(kp + ci) * self.cout..(kp + ci + 1) * self.cout];
                            for (co, &kv) in kr.iter().enumerate() {
                                axpy(gx, kv, &gt[(o + co) * n..(o + co + 1) * n]);
                            }
                        }
                    }
                }
            }
        }
        batch_first(&gxt, n)
    }

    fn grad_kernel(&self, g: &[f64], x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let (gt, xt) = (batch_last(g, n), batch_last(x, n));
        let mut gk = vec![0.0; self.kh * self.kw * self.cin * self.cout];
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let o = (oy * self.ow + ox) * self.cout;
                for ky in 0..self.kh {
                    for kx in 0..self.kw {
                        let ip = self.in_pos(oy, ox, ky, kx);
                        let kp = (ky * self.kw + kx) * self.cin;
                        for ci in 0..self.cin {
                            let xs = &xt[(ip + ci) * n..(ip + ci + 1) * n];
                            let kr = &mut gk[(kp + ci) * self.cout..(kp + ci + 1) * self.cout];
                            for (co, kv) in kr.iter_mut().enumerate() {
                                *kv += dot(&gt[(o + co) * n..(o + co + 1) * n], xs);
                            }
                        }
                    }
                }
            }
        }
        gk
    }
}

/// `[N, rest]` to `[rest, N]`.
fn batch_last(data: &[f64], n: usize) -> Vec<f64> {
    let inner = data.len() / n;
    let mut out = vec![0.0; data.len()];
    for (b, sample) in data.chunks_exact(inner).enumerate() {
        for (i, &v) in sample.iter().enumerate() {
            out[i * n + b] = v;
        }
    }
    out
}

/// `[rest, N]` back to `[N, rest]`.
fn batch_first(data: &[f64], n: usize) -> Vec<f64> {
    let inner = data.len() / n;
    let mut out = vec![0.0; data.len()];
    for (i, col) in data.chunks_exact(n).enumerate() {
        for (b, &v) in col.iter().enumerate() {
            out[b * inner + i] = v;
        }
    }
    out
}

/// Dot product with four independent partial sums.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    let mut s = [0.0; 4];
    for (x, y) in ca.zip(cb) {
        s[0] += x[0] * y[0];
        s[1] += x[1] * y[1];
        s[2] += x[2] * y[2];
        s[3] += x[3] * y[3];
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}
