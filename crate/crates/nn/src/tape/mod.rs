//! Reverse-mode gradient tape.
//!
//! Every op evaluates eagerly, appends a node holding its output and whatever
//! it needs for the backward pass, and returns a [`Var`] handle. A single
//! [`Tape::backward`] call then walks the nodes in exact reverse order of
//! recording. The tape can only be differentiated once.

mod conv;
mod lstm;
mod norm;

use std::collections::HashMap;

use rand::Rng;

use crate::tensor::gemm;
use crate::{Float, NnError, ParamId, ParamStore, Result, Tensor};
use conv::ConvGeom;
use lstm::{LstmCache, LstmDims};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// How batch normalization obtains its statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NormMode {
    /// Batch statistics, running averages updated afterwards.
    #[default]
    Train,
    /// Batch statistics without touching the running averages. At inference
    /// the chunks of one song form the batch.
    BatchStatsEval,
    /// Stored running averages.
    RunningStatsEval,
}

impl NormMode {
    pub fn uses_batch_stats(self) -> bool {
        !matches!(self, NormMode::RunningStatsEval)
    }
}

const CLAMP_LO: f64 = 1e-7;
const CLAMP_HI: f64 = 1.0 - 1e-7;

/// Like `max(lo).min(hi)` but lets NaN through, so a broken forward pass
/// surfaces as a non-finite loss.
fn clamp_prob<T: Float>(p: T, lo: T, hi: T) -> T {
    if p.is_nan() {
        p
    } else {
        p.max(lo).min(hi)
    }
}

enum Op<T: Float> {
    Constant,
    Leaf,
    Param(ParamId),
    MatMul { a: Var, b: Var },
    AddBias { x: Var, bias: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Conv2d { x: Var, kernel: Var, geom: ConvGeom },
    TimeMaxPool { x: Var, argmax: Vec<usize> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, batch_stats: bool },
    Relu { x: Var },
    Tanh { x: Var },
    Sigmoid { x: Var },
    Softmax { x: Var },
    Dropout { x: Var, mask: Vec<T> },
    Reshape { x: Var },
    WeightedSum { weights: Var, values: Var },
    Lstm { x: Var, w_ih: Var, w_hh: Var, bias: Var, dims: LstmDims, cache: LstmCache<T> },
    Sum { x: Var },
    BinaryCrossEntropy { pred: Var, target: Tensor<T> },
    CategoricalCrossEntropy { pred: Var, target: Tensor<T> },
}

struct Node<T: Float> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Tape<T: Float = f32> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
    consumed: bool,
}

impl<T: Float> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`] for leaves and parameters.
#[derive(Debug)]
pub struct Gradients<T: Float> {
    leaves: HashMap<Var, Tensor<T>>,
    params: HashMap<ParamId, Tensor<T>>,
}

impl<T: Float> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.leaves.get(&v)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(&id)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.params.iter().map(|(&k, v)| (k, v))
    }
}

fn accumulate<T: Float>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn same_shape(op: &'static str, a: &Tensor<impl Float>, b: &Tensor<impl Float>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(NnError::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), params: HashMap::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// A differentiable input whose gradient is reported by [`Gradients::wrt`].
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a parameter. Repeated calls with the same id share one node,
    /// so every use contributes to a single accumulated gradient.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = store.get(id);
        let v = self.push(p.value.clone(), Op::Param(id), p.trainable);
        self.params.insert(id, v);
        v
    }

    /// `[M, K] · [K, N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (&[m, k], &[k2, n]) = (av.shape(), bv.shape()) else {
            return Err(NnError::shape(
                "matmul",
                format!("need 2-D operands, got {:?} and {:?}", av.shape(), bv.shape()),
            ));
        };
        if k != k2 {
            return Err(NnError::shape("matmul", format!("[{m},{k}] x [{k2},{n}]")));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, T::zero(), &mut out);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul { a, b }, needs))
    }

    /// Adds a `[C]` bias along the last axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let c = xv.last_dim();
        if bv.shape() != [c] {
            return Err(NnError::shape("add_bias", format!("bias {:?} for input {:?}", bv.shape(), xv.shape())));
        }
        let mut out = xv.clone();
        for row in out.data_mut().chunks_exact_mut(c) {
            for (o, &b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(out, Op::AddBias { x, bias }, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("add", av, bv)?;
        let mut out = av.clone();
        out.add_assign(bv);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add { a, b }, needs))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("mul", av, bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::from_parts(av.shape().to_vec(), data);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul { a, b }, needs))
    }

    /// Valid convolution of `[N, H, W, Cin]` with a `[KH, KW, Cin, Cout]`
    /// kernel; output is `[N, (H-KH)/sh + 1, (W-KW)/sw + 1, Cout]`.
    pub fn conv2d(&mut self, x: Var, kernel: Var, stride: (usize, usize)) -> Result<Var> {
        let geom = ConvGeom::new(self.value(x).shape(), self.value(kernel).shape(), stride)?;
        let y = conv::forward(self.value(x).data(), self.value(kernel).data(), &geom);
        let needs = self.needs(x) || self.needs(kernel);
        Ok(self.push(Tensor::from_parts(geom.out_shape(), y), Op::Conv2d { x, kernel, geom }, needs))
    }

    /// `[N, T, 1, C] -> [N, C]`, maximum over the time axis. The earliest
    /// maximal position wins ties and receives the whole gradient.
    pub fn time_max_pool(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let &[n, t, w, c] = xv.shape() else {
            return Err(NnError::shape("time_max_pool", format!("need [N,T,1,C], got {:?}", xv.shape())));
        };
        if w != 1 {
            return Err(NnError::shape("time_max_pool", format!("spatial width must be 1, got {w}")));
        }
        let data = xv.data();
        let mut out = vec![T::zero(); n * c];
        let mut argmax = vec![0usize; n * c];
        for ni in 0..n {
            for ci in 0..c {
                let mut best = data[ni * t * c + ci];
                let mut at = 0;
                for ti in 1..t {
                    let v = data[(ni * t + ti) * c + ci];
                    if v > best {
                        best = v;
                        at = ti;
                    }
                }
                out[ni * c + ci] = best;
                argmax[ni * c + ci] = at;
            }
        }
        let needs = self.needs(x);
        Ok(self.push(Tensor::from_parts(vec![n, c], out), Op::TimeMaxPool { x, argmax }, needs))
    }

    /// Normalizes each feature of the last axis over all other axes, then
    /// scales by `gamma` and shifts by `beta`.
    ///
    /// With `running = None` the batch's own statistics are used (at least two
    /// rows are required) and returned as `(mean, biased variance)`.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: Option<(&[T], &[T])>,
        eps: f64,
    ) -> Result<(Var, Option<(Vec<T>, Vec<T>)>)> {
        let xv = self.value(x);
        let c = xv.last_dim();
        let rows = xv.numel() / c;
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.value(v).shape() != [c] {
                return Err(NnError::shape(
                    "batch_norm",
                    format!("{name} {:?} for {c} features", self.value(v).shape()),
                ));
            }
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let eps = T::lit(eps);
        let (fwd, batch_stats) = match running {
            None => {
                if rows < 2 {
                    return Err(NnError::invalid("batch_norm", "batch statistics need at least 2 rows"));
                }
                (norm::forward_batch(xv.data(), c, g, b, eps), true)
            }
            Some((mean, var)) => {
                if mean.len() != c || var.len() != c {
                    return Err(NnError::shape("batch_norm", "running statistics width"));
                }
                (norm::forward_with(xv.data(), c, g, b, mean, var, eps), false)
            }
        };
        let shape = xv.shape().to_vec();
        let stats = batch_stats.then_some((fwd.mean, fwd.var));
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let op = Op::BatchNorm { x, gamma, beta, xhat: fwd.xhat, inv_std: fwd.inv_std, batch_stats };
        Ok((self.push(Tensor::from_parts(shape, fwd.y), op, needs), stats))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let out = self.value(x).map(f);
        let needs = self.needs(x);
        self.push(out, op, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > T::zero() { v } else { T::zero() }, Op::Relu { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, |v| T::one() / (T::one() + (-v).exp()), Op::Sigmoid { x })
    }

    /// Softmax along the last axis, computed with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let c = xv.last_dim();
        let mut out = xv.clone();
        for row in out.data_mut().chunks_exact_mut(c) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let needs = self.needs(x);
        self.push(out, Op::Softmax { x }, needs)
    }

    /// Inverted dropout. Identity when `train` is false or `rate` is zero.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, train: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::invalid("dropout", format!("rate {rate} outside [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let xv = self.value(x);
        let mask: Vec<T> = (0..xv.numel()).map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect();
        let data = xv.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::from_parts(xv.shape().to_vec(), data);
        let needs = self.needs(x);
        Ok(self.push(out, Op::Dropout { x, mask }, needs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        let needs = self.needs(x);
        Ok(self.push(out, Op::Reshape { x }, needs))
    }

    /// `out[b, :] = Σ_t weights[b, t] · values[b, t, :]`, the attention fusion
    /// step for both chunk predictions and chunk embeddings.
    pub fn weighted_sum(&mut self, weights: Var, values: Var) -> Result<Var> {
        let (wv, vv) = (self.value(weights), self.value(values));
        let (&[b, t], &[b2, t2, d]) = (wv.shape(), vv.shape()) else {
            return Err(NnError::shape("weighted_sum", format!("weights {:?}, values {:?}", wv.shape(), vv.shape())));
        };
        if b != b2 || t != t2 {
            return Err(NnError::shape("weighted_sum", format!("weights [{b},{t}] vs values [{b2},{t2},{d}]")));
        }
        let mut out = vec![T::zero(); b * d];
        for bi in 0..b {
            let orow = &mut out[bi * d..(bi + 1) * d];
            for ti in 0..t {
                let w = wv.data()[bi * t + ti];
                for (o, &v) in orow.iter_mut().zip(&vv.data()[(bi * t + ti) * d..(bi * t + ti + 1) * d]) {
                    *o += w * v;
                }
            }
        }
        let needs = self.needs(weights) || self.needs(values);
        Ok(self.push(Tensor::from_parts(vec![b, d], out), Op::WeightedSum { weights, values }, needs))
    }

    /// LSTM over `[B, T, D]` with `w_ih: [D, 4H]`, `w_hh: [H, 4H]`,
    /// `bias: [4H]`; returns the hidden states `[B, T, H]`.
    pub fn lstm(&mut self, x: Var, w_ih: Var, w_hh: Var, bias: Var, reverse: bool) -> Result<Var> {
        let (xv, wi, wh, bv) = (self.value(x), self.value(w_ih), self.value(w_hh), self.value(bias));
        let &[batch, steps, input] = xv.shape() else {
            return Err(NnError::shape("lstm", format!("input must be [B,T,D], got {:?}", xv.shape())));
        };
        let &[h, g4] = wh.shape() else {
            return Err(NnError::shape("lstm", format!("w_hh must be [H,4H], got {:?}", wh.shape())));
        };
        if g4 != 4 * h || wi.shape() != [input, g4] || bv.shape() != [g4] {
            return Err(NnError::shape(
                "lstm",
                format!("w_ih {:?}, w_hh {:?}, bias {:?} for input width {input}", wi.shape(), wh.shape(), bv.shape()),
            ));
        }
        let dims = LstmDims { batch, steps, input, hidden: h, reverse };
        let (out, cache) = lstm::forward(xv.data(), wi.data(), wh.data(), bv.data(), dims);
        let needs = [x, w_ih, w_hh, bias].iter().any(|&v| self.needs(v));
        let op = Op::Lstm { x, w_ih, w_hh, bias, dims, cache };
        Ok(self.push(Tensor::from_parts(vec![batch, steps, h], out), op, needs))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(total), Op::Sum { x }, needs)
    }

    fn check_loss_inputs(&self, op: &'static str, pred: Var, target: &Tensor<T>) -> Result<()> {
        let pv = self.value(pred);
        if pv.rank() != 2 || pv.shape() != target.shape() {
            return Err(NnError::shape(op, format!("pred {:?} vs target {:?}", pv.shape(), target.shape())));
        }
        Ok(())
    }

    /// Mean over batch and classes of `-[y ln p + (1-y) ln(1-p)]`, with `p`
    /// clamped to `[1e-7, 1 - 1e-7]`.
    pub fn binary_cross_entropy(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        self.check_loss_inputs("binary_cross_entropy", pred, target)?;
        let pv = self.value(pred);
        let (lo, hi) = (T::lit(CLAMP_LO), T::lit(CLAMP_HI));
        let mut total = T::zero();
        for (&p, &y) in pv.data().iter().zip(target.data()) {
            let p = clamp_prob(p, lo, hi);
            total -= y * p.ln() + (T::one() - y) * (T::one() - p).ln();
        }
        let loss = total / T::lit(pv.numel() as f64);
        let needs = self.needs(pred);
        Ok(self.push(Tensor::scalar(loss), Op::BinaryCrossEntropy { pred, target: target.clone() }, needs))
    }

    /// Batch mean of `-Σ_c y_c ln p_c`, with the same clamping as BCE.
    pub fn categorical_cross_entropy(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        self.check_loss_inputs("categorical_cross_entropy", pred, target)?;
        let pv = self.value(pred);
        let (lo, hi) = (T::lit(CLAMP_LO), T::lit(CLAMP_HI));
        let mut total = T::zero();
        for (&p, &y) in pv.data().iter().zip(target.data()) {
            total -= y * clamp_prob(p, lo, hi).ln();
        }
        let loss = total / T::lit(pv.shape()[0] as f64);
        let needs = self.needs(pred);
        Ok(self.push(Tensor::scalar(loss), Op::CategoricalCrossEntropy { pred, target: target.clone() }, needs))
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape's recorded state:
    /// a second call fails with [`NnError::TapeConsumed`].
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(NnError::TapeConsumed);
        }
        if self.value(loss).numel() != 1 {
            return Err(NnError::shape("backward", format!("loss must be scalar, got {:?}", self.value(loss).shape())));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::one()));
        let mut out = Gradients { leaves: HashMap::new(), params: HashMap::new() };

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(g) = grads[idx].take() else { continue };
            if !node.needs_grad {
                continue;
            }
            self.backward_node(Var(idx), node, g, &mut grads, &mut out)?;
        }
        Ok(out)
    }

    fn backward_node(
        &self,
        this: Var,
        node: &Node<T>,
        g: Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
        out: &mut Gradients<T>,
    ) -> Result<()> {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        let mut send = |v: Var, t: Tensor<T>| {
            if self.nodes[v.0].needs_grad {
                accumulate(grads, v, t);
            }
        };
        match &node.op {
            Op::Constant => {}
            Op::Leaf => {
                out.leaves.insert(this, g);
            }
            Op::Param(id) => match out.params.get_mut(id) {
                Some(acc) => acc.add_assign(&g),
                None => {
                    out.params.insert(*id, g);
                }
            },
            Op::MatMul { a, b } => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if wants(*a) {
                    let mut da = vec![T::zero(); m * k];
                    gemm(m, n, k, g.data(), false, bv.data(), true, T::zero(), &mut da);
                    send(*a, Tensor::from_parts(vec![m, k], da));
                }
                if wants(*b) {
                    let mut db = vec![T::zero(); k * n];
                    gemm(k, m, n, av.data(), true, g.data(), false, T::zero(), &mut db);
                    send(*b, Tensor::from_parts(vec![k, n], db));
                }
            }
            Op::AddBias { x, bias } => {
                let c = g.last_dim();
                if wants(*bias) {
                    let mut db = vec![T::zero(); c];
                    for row in g.data().chunks_exact(c) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    send(*bias, Tensor::from_parts(vec![c], db));
                }
                send(*x, g);
            }
            Op::Add { a, b } => {
                send(*a, g.clone());
                send(*b, g);
            }
            Op::Mul { a, b } => {
                let (av, bv) = (val(*a), val(*b));
                if wants(*a) {
                    let d = g.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
                    send(*a, Tensor::from_parts(g.shape().to_vec(), d));
                }
                if wants(*b) {
                    let d = g.data().iter().zip(av.data()).map(|(&x, &y)| x * y).collect();
                    send(*b, Tensor::from_parts(g.shape().to_vec(), d));
                }
            }
            Op::Conv2d { x, kernel, geom } => {
                let (xv, kv) = (val(*x), val(*kernel));
                if wants(*kernel) {
                    let dk = conv::backward_kernel(xv.data(), g.data(), geom);
                    send(*kernel, Tensor::from_parts(kv.shape().to_vec(), dk));
                }
                if wants(*x) {
                    let dx = conv::backward_input(kv.data(), g.data(), geom);
                    send(*x, Tensor::from_parts(xv.shape().to_vec(), dx));
                }
            }
            Op::TimeMaxPool { x, argmax } => {
                let xv = val(*x);
                let (t, c) = (xv.shape()[1], xv.shape()[3]);
                let mut dx = vec![T::zero(); xv.numel()];
                for (i, (&gv, &at)) in g.data().iter().zip(argmax).enumerate() {
                    let (ni, ci) = (i / c, i % c);
                    dx[(ni * t + at) * c + ci] = gv;
                }
                send(*x, Tensor::from_parts(xv.shape().to_vec(), dx));
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats } => {
                let c = g.last_dim();
                let gv = val(*gamma);
                let r = norm::backward(g.data(), xhat, inv_std, gv.data(), c, *batch_stats);
                send(*gamma, Tensor::from_parts(vec![c], r.dgamma));
                send(*beta, Tensor::from_parts(vec![c], r.dbeta));
                send(*x, Tensor::from_parts(g.shape().to_vec(), r.dx));
            }
            Op::Relu { x } => {
                let xv = val(*x);
                let d = g.data().iter().zip(xv.data()).map(|(&gv, &v)| if v > T::zero() { gv } else { T::zero() });
                send(*x, Tensor::from_parts(g.shape().to_vec(), d.collect()));
            }
            Op::Tanh { x } => {
                let d = g.data().iter().zip(node.value.data()).map(|(&gv, &y)| gv * (T::one() - y * y));
                send(*x, Tensor::from_parts(g.shape().to_vec(), d.collect()));
            }
            Op::Sigmoid { x } => {
                let d = g.data().iter().zip(node.value.data()).map(|(&gv, &y)| gv * y * (T::one() - y));
                send(*x, Tensor::from_parts(g.shape().to_vec(), d.collect()));
            }
            Op::Softmax { x } => {
                let c = g.last_dim();
                let mut dx = Vec::with_capacity(g.numel());
                for (grow, yrow) in g.data().chunks_exact(c).zip(node.value.data().chunks_exact(c)) {
                    let dot: T = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                    dx.extend(grow.iter().zip(yrow).map(|(&gv, &y)| y * (gv - dot)));
                }
                send(*x, Tensor::from_parts(g.shape().to_vec(), dx));
            }
            Op::Dropout { x, mask } => {
                let d = g.data().iter().zip(mask).map(|(&gv, &m)| gv * m).collect();
                send(*x, Tensor::from_parts(g.shape().to_vec(), d));
            }
            Op::Reshape { x } => {
                let shape = val(*x).shape().to_vec();
                send(*x, g.reshape(&shape)?);
            }
            Op::WeightedSum { weights, values } => {
                let (wv, vv) = (val(*weights), val(*values));
                let (b, t, d) = (vv.shape()[0], vv.shape()[1], vv.shape()[2]);
                if wants(*weights) {
                    let mut dw = vec![T::zero(); b * t];
                    for bi in 0..b {
                        let grow = &g.data()[bi * d..(bi + 1) * d];
                        for ti in 0..t {
                            let vrow = &vv.data()[(bi * t + ti) * d..(bi * t + ti + 1) * d];
                            dw[bi * t + ti] = grow.iter().zip(vrow).map(|(&a, &c)| a * c).sum();
                        }
                    }
                    send(*weights, Tensor::from_parts(vec![b, t], dw));
                }
                if wants(*values) {
                    let mut dv = vec![T::zero(); b * t * d];
                    for bi in 0..b {
                        let grow = &g.data()[bi * d..(bi + 1) * d];
                        for ti in 0..t {
                            let w = wv.data()[bi * t + ti];
                            for (o, &gv) in dv[(bi * t + ti) * d..(bi * t + ti + 1) * d].iter_mut().zip(grow) {
                                *o = w * gv;
                            }
                        }
                    }
                    send(*values, Tensor::from_parts(vec![b, t, d], dv));
                }
            }
            Op::Lstm { x, w_ih, w_hh, bias, dims, cache } => {
                let (xv, wi, wh) = (val(*x), val(*w_ih), val(*w_hh));
                let r = lstm::backward(g.data(), xv.data(), wi.data(), wh.data(), cache, *dims);
                send(*w_ih, Tensor::from_parts(wi.shape().to_vec(), r.dw_ih));
                send(*w_hh, Tensor::from_parts(wh.shape().to_vec(), r.dw_hh));
                send(*bias, Tensor::from_parts(vec![4 * dims.hidden], r.dbias));
                send(*x, Tensor::from_parts(xv.shape().to_vec(), r.dx));
            }
            Op::Sum { x } => {
                let shape = val(*x).shape().to_vec();
                send(*x, Tensor::full(&shape, g[0]));
            }
            Op::BinaryCrossEntropy { pred, target } => {
                let pv = val(*pred);
                let (lo, hi) = (T::lit(CLAMP_LO), T::lit(CLAMP_HI));
                let scale = g[0] / T::lit(pv.numel() as f64);
                let d = pv.data().iter().zip(target.data()).map(|(&p, &y)| {
                    if p < lo || p > hi {
                        T::zero()
                    } else {
                        scale * ((T::one() - y) / (T::one() - p) - y / p)
                    }
                });
                send(*pred, Tensor::from_parts(pv.shape().to_vec(), d.collect()));
            }
            Op::CategoricalCrossEntropy { pred, target } => {
                let pv = val(*pred);
                let (lo, hi) = (T::lit(CLAMP_LO), T::lit(CLAMP_HI));
                let scale = g[0] / T::lit(pv.shape()[0] as f64);
                let d =
                    pv.data().iter().zip(target.data()).map(
                        |(&p, &y)| {
                            if p < lo || p > hi {
                                T::zero()
                            } else {
                                -scale * y / p
                            }
                        },
                    );
                send(*pred, Tensor::from_parts(pv.shape().to_vec(), d.collect()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0]));
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn tape_cannot_be_consumed_twice() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1], &[2.0]));
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.backward(s).unwrap_err(), NnError::TapeConsumed);
    }

    #[test]
    fn shared_parameter_accumulates() {
        let mut store = ParamStore::new();
        let id = store.insert("w", t(&[1, 1], &[3.0]), true).unwrap();
        let mut tape = Tape::new();
        let w1 = tape.param(&store, id);
        let w2 = tape.param(&store, id);
        assert_eq!(w1, w2);
        let x = tape.constant(t(&[1, 1], &[2.0]));
        let a = tape.matmul(x, w1).unwrap();
        let b = tape.matmul(a, w2).unwrap();
        let s = tape.sum(b);
        // d/dw (2 w^2) = 4w = 12
        let g = tape.backward(s).unwrap();
        assert!((g.param(id).unwrap()[0] - 12.0).abs() < 1e-12);
    }

    #[test]
    fn max_pool_routes_ties_to_earliest() {
        let mut tape = Tape::new();
        // [1, 3, 1, 2]: channel 0 ties at t=0 and t=2, channel 1 peaks at t=1
        let x = tape.leaf(t(&[1, 3, 1, 2], &[5.0, 0.0, 1.0, 7.0, 5.0, 2.0]));
        let y = tape.time_max_pool(x).unwrap();
        assert_eq!(tape.value(y).data(), &[5.0, 7.0]);
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn relu_gradient_at_zero_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[-1.0, 0.0, 2.0]));
        let y = tape.relu(x);
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(t(&[2], &[1.0, 2.0]));
        let x = tape.leaf(t(&[2], &[3.0, 4.0]));
        let y = tape.mul(c, x).unwrap();
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert!(g.wrt(c).is_none());
        assert_eq!(g.wrt(x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn batch_of_one_is_rejected_in_batch_stats() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[1, 2], &[1.0, 2.0]));
        let g = tape.constant(t(&[2], &[1.0, 1.0]));
        let b = tape.constant(t(&[2], &[0.0, 0.0]));
        assert!(tape.batch_norm(x, g, b, None, 1e-5).is_err());
        let (m, v) = ([0.0, 0.0], [1.0, 1.0]);
        assert!(tape.batch_norm(x, g, b, Some((&m, &v)), 1e-5).is_ok());
    }

    #[test]
    fn loss_shape_mismatch_is_an_error() {
        let mut tape = Tape::<f64>::new();
        let p = tape.constant(t(&[1, 2], &[0.5, 0.5]));
        assert!(tape.binary_cross_entropy(p, &t(&[1, 3], &[1.0, 0.0, 0.0])).is_err());
        assert!(tape.categorical_cross_entropy(p, &t(&[2, 1], &[1.0, 0.0])).is_err());
    }
}
