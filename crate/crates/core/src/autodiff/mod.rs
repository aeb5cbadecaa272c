//! Reverse-mode differentiation over `(n, c, h, w)` tensors.
//!
//! A [`Tape`] records every operation as it is evaluated; [`Tape::backward`]
//! walks the record in reverse and applies each operation's vector-Jacobian
//! product. Complex fields travel as real tensors with `2k` channels: the
//! first `k` hold real parts and the last `k` imaginary parts, which is also
//! what unshuffling a `(n, 2, H, W)` field produces.

pub mod gradcheck;
mod kernels;
mod params;

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{s, Array2, Array4, ArrayD, Axis, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::metrics::ledger::{MemoryLedger, Stage};
use crate::propagation::TransferFunction;

pub use params::{ParamId, ParamStore};
pub(crate) use params::to_tensor;

pub type Tensor = Array4<f64>;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Leaf,
    Param,
    Conv2d { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    ConvT2 { x: Var, w: Var, b: Option<Var> },
    LeakyRelu { x: Var, slope: f64 },
    Sigmoid { x: Var },
    Grn { x: Var, gamma: Var, beta: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, k: f64 },
    Sum { x: Var },
    Concat { xs: Vec<Var> },
    Select { x: Var, channels: Vec<usize> },
    Shuffle { x: Var, r: usize },
    Unshuffle { x: Var, r: usize },
    Polar { amp: Var, phase: Var },
    Propagate { x: Var, tf: Arc<TransferFunction> },
    Modulus { x: Var },
    Mse { a: Var, target: Var },
    ScaledMse { a: Var, target: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    stage: Stage,
}

/// Records a computation for one forward/backward pass.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    ledger: Option<MemoryLedger>,
    stage: Stage,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn bytes_of(t: &Tensor) -> usize {
    t.len() * std::mem::size_of::<f64>()
}

fn same_or_channel(a: &Tensor, b: &Tensor) -> Result<bool> {
    if a.dim() == b.dim() {
        return Ok(false);
    }
    let (_, c, _, _) = a.dim();
    if b.dim() == (1, c, 1, 1) {
        return Ok(true);
    }
    Err(Error::dim(format!(
        "shapes {:?} and {:?} are not broadcast-compatible",
        a.dim(),
        b.dim()
    )))
}

/// Per-channel view of a `(1, c, 1, 1)` tensor broadcast against `like`.
fn broadcast<'a>(b: &'a Tensor, like: &Tensor) -> ndarray::ArrayView4<'a, f64> {
    b.broadcast(like.dim()).expect("checked broadcast")
}

fn reduce_to_channel(g: &Tensor) -> Tensor {
    let c = g.dim().1;
    let mut out = Tensor::zeros((1, c, 1, 1));
    for ch in 0..c {
        out[[0, ch, 0, 0]] = g.index_axis(Axis(1), ch).sum();
    }
    out
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Optimal gain `s = <a, t> / <a, a>` (0 when `a` vanishes).
pub fn optimal_scale(a: &[f64], t: &[f64]) -> f64 {
    let at: f64 = a.iter().zip(t).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    if aa > 0.0 {
        at / aa
    } else {
        0.0
    }
}

fn complex_planes(x: &Tensor, b: usize, i: usize, k: usize) -> Array2<Complex64> {
    let re = x.slice(s![b, i, .., ..]);
    let im = x.slice(s![b, k + i, .., ..]);
    Zip::from(&re).and(&im).map_collect(|&r, &m| Complex64::new(r, m))
}

fn write_planes(out: &mut Tensor, b: usize, i: usize, k: usize, z: &Array2<Complex64>) {
    Zip::from(out.slice_mut(s![b, i, .., ..]))
        .and(z)
        .for_each(|o, z| *o = z.re);
    Zip::from(out.slice_mut(s![b, k + i, .., ..]))
        .and(z)
        .for_each(|o, z| *o = z.im);
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: HashMap::new(),
            ledger: None,
            stage: Stage::AutodiffTape,
        }
    }

    /// A tape that reports every recorded buffer to `ledger`.
    pub fn with_ledger(ledger: MemoryLedger) -> Self {
        let mut tape = Self::new();
        tape.ledger = Some(ledger);
        tape
    }

    /// Stage that subsequently recorded values are attributed to.
    pub fn set_stage(&mut self, stage: Stage) {
        self.stage = stage;
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(value.iter().all(|v| v.is_finite()), "non-finite value from {op:?}");
        if let Some(l) = &self.ledger {
            l.alloc(self.stage, bytes_of(&value));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            stage: self.stage,
        });
        Var(self.nodes.len() - 1)
    }

    fn transient(&self, bytes: usize) {
        if let Some(l) = &self.ledger {
            l.alloc(self.stage, bytes);
            l.free(self.stage, bytes);
        }
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// A free variable whose gradient is reported by [`Tape::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records parameter `id` once per tape; repeated uses share one node so
    /// gradients from shared weights accumulate.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let v = self.push(to_tensor(store.get(id)), Op::Param, true);
        self.params.insert(id, v);
        v
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (_, ci, h, wd) = xv.dim();
        let (co, wci, k, k2) = wv.dim();
        if wci != ci || k != k2 || stride == 0 {
            return Err(Error::dim(format!(
                "conv2d: input {:?} vs weight {:?}",
                xv.dim(),
                wv.dim()
            )));
        }
        if h + 2 * pad < k || wd + 2 * pad < k {
            return Err(Error::dim("conv2d: kernel larger than padded input"));
        }
        if let Some(b) = b {
            if self.value(b).dim() != (1, co, 1, 1) {
                return Err(Error::dim(format!("conv2d: bias {:?} for {co} outputs", self.value(b).dim())));
            }
        }
        let ho = kernels::conv_out_dim(h, k, stride, pad);
        let wo = kernels::conv_out_dim(wd, k, stride, pad);
        self.transient(ci * k * k * ho * wo * std::mem::size_of::<f64>());
        let y = kernels::conv2d_forward(xv, wv, b.map(|b| self.value(b)), stride, pad);
        let rg = self.rg(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(y, Op::Conv2d { x, w, b, stride, pad }, rg))
    }

    /// "Same" 3x3-style convolution: stride 1, zero padding `k / 2`.
    pub fn conv_same(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let k = self.value(w).dim().2;
        if k.is_multiple_of(2) {
            return Err(Error::dim("same-padding convolution needs an odd kernel"));
        }
        self.conv2d(x, w, b, 1, k / 2)
    }

    /// 2x2 stride-2 transposed convolution, weight `(c_in, c_out, 2, 2)`.
    pub fn conv_transpose2x2(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (ci, co, k1, k2) = wv.dim();
        if xv.dim().1 != ci || k1 != 2 || k2 != 2 {
            return Err(Error::dim(format!(
                "conv_transpose2x2: input {:?} vs weight {:?}",
                xv.dim(),
                wv.dim()
            )));
        }
        if let Some(b) = b {
            if self.value(b).dim() != (1, co, 1, 1) {
                return Err(Error::dim("conv_transpose2x2: bias shape"));
            }
        }
        let y = kernels::conv_t2_forward(xv, wv, b.map(|b| self.value(b)));
        let rg = self.rg(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(y, Op::ConvT2 { x, w, b }, rg))
    }

    /// `max(x, slope * x)`
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let y = self.value(x).mapv(|v| if v >= 0.0 { v } else { slope * v });
        let rg = self.rg(&[x]);
        self.push(y, Op::LeakyRelu { x, slope }, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = self.value(x).mapv(sigmoid);
        let rg = self.rg(&[x]);
        self.push(y, Op::Sigmoid { x }, rg)
    }

    /// Global response normalization with per-channel `gamma`, `beta` of shape `(1, c, 1, 1)`.
    pub fn grn(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let c = self.value(x).dim().1;
        for p in [gamma, beta] {
            if self.value(p).dim() != (1, c, 1, 1) {
                return Err(Error::dim(format!("grn: parameter {:?} for {c} channels", self.value(p).dim())));
            }
        }
        let y = kernels::grn_forward(self.value(x), self.value(gamma), self.value(beta));
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(y, Op::Grn { x, gamma, beta }, rg))
    }

    /// Elementwise sum; `b` may also be a per-channel `(1, c, 1, 1)` tensor.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let y = if same_or_channel(av, bv)? {
            av + &broadcast(bv, av)
        } else {
            av + bv
        };
        let rg = self.rg(&[a, b]);
        Ok(self.push(y, Op::Add { a, b }, rg))
    }

    /// Elementwise product; `b` may also be a per-channel `(1, c, 1, 1)` tensor.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let y = if same_or_channel(av, bv)? {
            av * &broadcast(bv, av)
        } else {
            av * bv
        };
        let rg = self.rg(&[a, b]);
        Ok(self.push(y, Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let y = self.value(x) * k;
        let rg = self.rg(&[x]);
        self.push(y, Op::Scale { x, k }, rg)
    }

    /// Sum of all elements, as a `(1, 1, 1, 1)` scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let y = Tensor::from_elem((1, 1, 1, 1), self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(y, Op::Sum { x }, rg)
    }

    /// Concatenation along channels.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs.first().ok_or_else(|| Error::dim("concat of nothing"))?;
        let (n, _, h, w) = self.value(*first).dim();
        let mut parts = Vec::with_capacity(xs.len());
        for v in xs {
            let t = self.value(*v);
            let (n2, _, h2, w2) = t.dim();
            if (n2, h2, w2) != (n, h, w) {
                return Err(Error::dim(format!("concat: {:?} vs {:?}", t.dim(), (n, h, w))));
            }
            parts.push(t.view());
        }
        let y = ndarray::concatenate(Axis(1), &parts).expect("checked shapes");
        let rg = self.rg(xs);
        Ok(self.push(y, Op::Concat { xs: xs.to_vec() }, rg))
    }

    /// Gathers the listed channels, in order.
    pub fn select_channels(&mut self, x: Var, channels: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.dim().1;
        if let Some(bad) = channels.iter().find(|&&ch| ch >= c) {
            return Err(Error::dim(format!("select_channels: channel {bad} of {c}")));
        }
        let y = xv.select(Axis(1), channels);
        let rg = self.rg(&[x]);
        Ok(self.push(y, Op::Select { x, channels: channels.to_vec() }, rg))
    }

    /// `(n, c r^2, h, w) -> (n, c, h r, w r)` in the tiling layout.
    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let c = self.value(x).dim().1;
        if r == 0 || !c.is_multiple_of(r * r) {
            return Err(Error::dim(format!("pixel_shuffle: {c} channels at scale {r}")));
        }
        let y = kernels::pixel_shuffle4(self.value(x), r);
        let rg = self.rg(&[x]);
        Ok(self.push(y, Op::Shuffle { x, r }, rg))
    }

    /// `(n, c, h, w) -> (n, c r^2, h / r, w / r)` in the tiling layout.
    pub fn pixel_unshuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let (_, _, h, w) = self.value(x).dim();
        if r == 0 || h % r != 0 || w % r != 0 {
            return Err(Error::dim(format!("pixel_unshuffle: {h}x{w} at scale {r}")));
        }
        let y = kernels::pixel_unshuffle4(self.value(x), r);
        let rg = self.rg(&[x]);
        Ok(self.push(y, Op::Unshuffle { x, r }, rg))
    }

    /// `amp * exp(j phase)` as a `2k`-channel complex tensor.
    pub fn polar(&mut self, amp: Var, phase: Var) -> Result<Var> {
        let (av, pv) = (self.value(amp), self.value(phase));
        if av.dim() != pv.dim() {
            return Err(Error::dim(format!("polar: amplitude {:?} vs phase {:?}", av.dim(), pv.dim())));
        }
        let re = Zip::from(av).and(pv).map_collect(|a, p| a * p.cos());
        let im = Zip::from(av).and(pv).map_collect(|a, p| a * p.sin());
        let y = ndarray::concatenate(Axis(1), &[re.view(), im.view()]).expect("same shapes");
        let rg = self.rg(&[amp, phase]);
        Ok(self.push(y, Op::Polar { amp, phase }, rg))
    }

    /// Applies `tf` to each complex field packed in `x`.
    pub fn propagate(&mut self, x: Var, tf: &Arc<TransferFunction>) -> Result<Var> {
        let xv = self.value(x);
        let (n, c2, h, w) = xv.dim();
        if c2 % 2 != 0 || (h, w) != tf.dim() {
            return Err(Error::dim(format!(
                "propagate: tensor {:?} vs transfer grid {:?}",
                xv.dim(),
                tf.dim()
            )));
        }
        let k = c2 / 2;
        let mut y = Tensor::zeros(xv.dim());
        for b in 0..n {
            for i in 0..k {
                let z = tf.apply(&complex_planes(xv, b, i, k))?;
                write_planes(&mut y, b, i, k, &z);
            }
        }
        self.transient(tf.scratch_bytes());
        let rg = self.rg(&[x]);
        Ok(self.push(y, Op::Propagate { x, tf: Arc::clone(tf) }, rg))
    }

    /// Modulus of each packed complex field: `2k` channels in, `k` out.
    pub fn modulus(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (n, c2, h, w) = xv.dim();
        if c2 % 2 != 0 {
            return Err(Error::dim("modulus: odd channel count"));
        }
        let k = c2 / 2;
        let y = Tensor::from_shape_fn((n, k, h, w), |(b, c, i, j)| {
            xv[[b, c, i, j]].hypot(xv[[b, k + c, i, j]])
        });
        let rg = self.rg(&[x]);
        Ok(self.push(y, Op::Modulus { x }, rg))
    }

    /// Mean squared error against a target that receives no gradient.
    pub fn mse(&mut self, a: Var, target: Var) -> Result<Var> {
        let (av, tv) = (self.value(a), self.value(target));
        if av.dim() != tv.dim() {
            return Err(Error::dim(format!("mse: {:?} vs {:?}", av.dim(), tv.dim())));
        }
        let m = Zip::from(av).and(tv).fold(0.0, |acc, x, t| acc + (x - t) * (x - t)) / av.len() as f64;
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::from_elem((1, 1, 1, 1), m), Op::Mse { a, target }, rg))
    }

    /// `min_s mean((s a - target)^2)`, with the closed-form optimal `s`.
    pub fn scaled_mse(&mut self, a: Var, target: Var) -> Result<Var> {
        let (av, tv) = (self.value(a), self.value(target));
        if av.dim() != tv.dim() {
            return Err(Error::dim(format!("scaled_mse: {:?} vs {:?}", av.dim(), tv.dim())));
        }
        let (a_s, t_s) = (av.as_standard_layout(), tv.as_standard_layout());
        let s = optimal_scale(a_s.as_slice().unwrap(), t_s.as_slice().unwrap());
        let m = Zip::from(av)
            .and(tv)
            .fold(0.0, |acc, x, t| acc + (s * x - t) * (s * x - t))
            / av.len() as f64;
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::from_elem((1, 1, 1, 1), m), Op::ScaledMse { a, target }, rg))
    }

    /// Backpropagates from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).dim()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones((1, 1, 1, 1)));
        let mut grad_bytes = 0usize;

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut contrib: Vec<(Var, Tensor)> = Vec::new();
            self.vjp(node, &g, &mut contrib)?;
            for (v, d) in contrib {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => *acc += &d,
                    slot @ None => {
                        grad_bytes += bytes_of(&d);
                        *slot = Some(d);
                    }
                }
            }
            if self.nodes[idx].requires_grad && matches!(node.op, Op::Leaf | Op::Param) {
                grads[idx] = Some(g);
            }
        }
        if let Some(l) = &self.ledger {
            l.alloc(Stage::AutodiffTape, grad_bytes);
            l.free(Stage::AutodiffTape, grad_bytes);
        }

        let mut by_param = HashMap::new();
        for (id, v) in &self.params {
            if let Some(g) = grads[v.0].take() {
                by_param.insert(*id, g);
            }
        }
        let leaves = grads
            .into_iter()
            .enumerate()
            .filter_map(|(i, g)| g.map(|g| (Var(i), g)))
            .collect();
        Ok(Gradients { leaves, params: by_param })
    }

    fn vjp(&self, node: &Node, g: &Tensor, out: &mut Vec<(Var, Tensor)>) -> Result<()> {
        let val = |v: &Var| &self.nodes[v.0].value;
        let rg = |v: &Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Constant | Op::Leaf | Op::Param => {}
            Op::Conv2d { x, w, b, stride, pad } => {
                let (dx, dw, db) = kernels::conv2d_backward(val(x), val(w), g, *stride, *pad, rg(x));
                if let Some(dx) = dx {
                    out.push((*x, dx));
                }
                out.push((*w, dw));
                if let Some(b) = b {
                    out.push((*b, db));
                }
            }
            Op::ConvT2 { x, w, b } => {
                let (dx, dw, db) = kernels::conv_t2_backward(val(x), val(w), g, rg(x));
                if let Some(dx) = dx {
                    out.push((*x, dx));
                }
                out.push((*w, dw));
                if let Some(b) = b {
                    out.push((*b, db));
                }
            }
            Op::LeakyRelu { x, slope } => {
                let d = Zip::from(val(x)).and(g).map_collect(|&xv, &gv| if xv >= 0.0 { gv } else { slope * gv });
                out.push((*x, d));
            }
            Op::Sigmoid { x } => {
                let d = Zip::from(&node.value).and(g).map_collect(|&y, &gv| gv * y * (1.0 - y));
                out.push((*x, d));
            }
            Op::Grn { x, gamma, beta } => {
                let (dx, dgamma, dbeta) = kernels::grn_backward(val(x), val(gamma), g);
                out.push((*x, dx));
                out.push((*gamma, dgamma));
                out.push((*beta, dbeta));
            }
            Op::Add { a, b } => {
                out.push((*a, g.clone()));
                if val(b).dim() == g.dim() {
                    out.push((*b, g.clone()));
                } else {
                    out.push((*b, reduce_to_channel(g)));
                }
            }
            Op::Mul { a, b } => {
                let (av, bv) = (val(a), val(b));
                if bv.dim() == av.dim() {
                    out.push((*a, g * bv));
                    out.push((*b, g * av));
                } else {
                    out.push((*a, g * &broadcast(bv, av)));
                    out.push((*b, reduce_to_channel(&(g * av))));
                }
            }
            Op::Scale { x, k } => out.push((*x, g * *k)),
            Op::Sum { x } => out.push((*x, Tensor::from_elem(val(x).dim(), g[[0, 0, 0, 0]]))),
            Op::Concat { xs } => {
                let mut start = 0;
                for v in xs {
                    let c = val(v).dim().1;
                    out.push((*v, g.slice(s![.., start..start + c, .., ..]).to_owned()));
                    start += c;
                }
            }
            Op::Select { x, channels } => {
                let mut d = Tensor::zeros(val(x).dim());
                for (i, &ch) in channels.iter().enumerate() {
                    let mut dst = d.index_axis_mut(Axis(1), ch);
                    dst += &g.index_axis(Axis(1), i);
                }
                out.push((*x, d));
            }
            Op::Shuffle { x, r } => out.push((*x, kernels::pixel_unshuffle4(g, *r))),
            Op::Unshuffle { x, r } => out.push((*x, kernels::pixel_shuffle4(g, *r))),
            Op::Polar { amp, phase } => {
                let (av, pv) = (val(amp), val(phase));
                let k = av.dim().1;
                let gre = g.slice(s![.., ..k, .., ..]);
                let gim = g.slice(s![.., k.., .., ..]);
                let damp = Zip::from(pv).and(&gre).and(&gim).map_collect(|p, r, i| r * p.cos() + i * p.sin());
                let dphase = Zip::from(av)
                    .and(pv)
                    .and(&gre)
                    .and(&gim)
                    .map_collect(|a, p, r, i| a * (i * p.cos() - r * p.sin()));
                out.push((*amp, damp));
                out.push((*phase, dphase));
            }
            Op::Propagate { x, tf } => {
                // the real-pair transpose of a complex-linear map is its Hermitian adjoint
                let (n, c2, _, _) = g.dim();
                let k = c2 / 2;
                let mut d = Tensor::zeros(g.dim());
                for b in 0..n {
                    for i in 0..k {
                        let z = tf.apply_adjoint(&complex_planes(g, b, i, k))?;
                        write_planes(&mut d, b, i, k, &z);
                    }
                }
                out.push((*x, d));
            }
            Op::Modulus { x } => {
                let xv = val(x);
                let k = node.value.dim().1;
                let mut d = Tensor::zeros(xv.dim());
                for ((b, c, i, j), m) in node.value.indexed_iter() {
                    if *m > 0.0 {
                        let gv = g[[b, c, i, j]] / m;
                        d[[b, c, i, j]] = gv * xv[[b, c, i, j]];
                        d[[b, k + c, i, j]] = gv * xv[[b, k + c, i, j]];
                    }
                }
                out.push((*x, d));
            }
            Op::Mse { a, target } => {
                let n = val(a).len() as f64;
                let k = 2.0 * g[[0, 0, 0, 0]] / n;
                let d = Zip::from(val(a)).and(val(target)).map_collect(|x, t| k * (x - t));
                out.push((*a, d));
            }
            Op::ScaledMse { a, target } => {
                // the optimal gain is stationary, so only the explicit dependence on `a` remains
                let (av, tv) = (val(a), val(target));
                let (a_s, t_s) = (av.as_standard_layout(), tv.as_standard_layout());
                let s = optimal_scale(a_s.as_slice().unwrap(), t_s.as_slice().unwrap());
                let k = 2.0 * g[[0, 0, 0, 0]] * s / av.len() as f64;
                let d = Zip::from(av).and(tv).map_collect(|x, t| k * (s * x - t));
                out.push((*a, d));
            }
        }
        Ok(())
    }
}

impl Drop for Tape {
    fn drop(&mut self) {
        if let Some(l) = &self.ledger {
            for n in &self.nodes {
                l.free(n.stage, bytes_of(&n.value));
            }
        }
    }
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    leaves: HashMap<Var, Tensor>,
    params: HashMap<ParamId, Tensor>,
}

impl Gradients {
    /// Gradient of a leaf; `None` for constants and unreached leaves.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.leaves.get(&v)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    /// Gradient of `id` reshaped like the stored parameter; zeros if unused.
    pub fn param_like(&self, store: &ParamStore, id: ParamId) -> ArrayD<f64> {
        let shape = store.get(id).raw_dim();
        match self.params.get(&id) {
            Some(g) => g.clone().into_shape_with_order(shape).expect("gradient size matches parameter"),
            None => ArrayD::zeros(shape),
        }
    }
}
