use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::grad::ops::{self, CdfModel};
use crate::grad::{Array, Executor, TensorId};

pub(crate) static TAPES_CREATED: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone)]
enum Op {
    Leaf { requires_grad: bool },
    Conv2d { x: TensorId, k: TensorId, b: TensorId, stride: usize, pad: usize },
    Deconv2d { x: TensorId, k: TensorId, b: TensorId },
    LeakyRelu { x: TensorId, slope: f64 },
    Add { a: TensorId, b: TensorId },
    Sub { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    Scale { x: TensorId, c: f64 },
    Concat { parts: Vec<TensorId> },
    Upsample2x { x: TensorId },
    AvgPool2 { x: TensorId },
    Warp { src: TensorId, flow: TensorId },
    IntervalNll { v: TensorId, loc: TensorId, raw_scale: TensorId, model: CdfModel },
    Sqrt { x: TensorId },
    AddNoise { x: TensorId },
    Sum { x: TensorId },
    Mean { x: TensorId },
}

impl Op {
    fn inputs(&self, buf: &mut Vec<TensorId>) {
        buf.clear();
        match self {
            Op::Leaf { .. } => {}
            Op::Conv2d { x, k, b, .. } | Op::Deconv2d { x, k, b } => {
                buf.extend([*x, *k, *b]);
            }
            Op::LeakyRelu { x, .. }
            | Op::Scale { x, .. }
            | Op::Upsample2x { x }
            | Op::AvgPool2 { x }
            | Op::Sqrt { x }
            | Op::AddNoise { x }
            | Op::Sum { x }
            | Op::Mean { x } => buf.push(*x),
            Op::Add { a, b } | Op::Sub { a, b } | Op::Mul { a, b } => buf.extend([*a, *b]),
            Op::Concat { parts } => buf.extend_from_slice(parts),
            Op::Warp { src, flow } => buf.extend([*src, *flow]),
            Op::IntervalNll { v, loc, raw_scale, .. } => buf.extend([*v, *loc, *raw_scale]),
        }
    }
}

struct Node {
    op: Op,
    value: Array,
}

/// Recording executor: an append-only arena of executed primitives that can
/// be replayed backward to accumulate exact reverse-mode gradients.
pub struct Tape {
    nodes: Vec<Node>,
    floored: usize,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        TAPES_CREATED.fetch_add(1, Ordering::Relaxed);
        Tape {
            nodes: Vec::new(),
            floored: 0,
        }
    }

    /// Insert a differentiable leaf.
    pub fn leaf(&mut self, a: Array) -> TensorId {
        self.push(Op::Leaf { requires_grad: true }, a)
    }

    fn push(&mut self, op: Op, value: Array) -> TensorId {
        self.nodes.push(Node { op, value });
        TensorId(self.nodes.len() - 1)
    }

    fn val(&self, id: TensorId) -> &Array {
        &self.nodes[id.0].value
    }

    /// Reverse sweep from a scalar `loss`. Every requires-grad leaf receives
    /// an entry; leaves with no path to the loss receive zeros. The tape is
    /// not consumed: repeated calls yield bit-identical gradients.
    pub fn backward(&self, loss: TensorId) -> Result<Gradients> {
        let loss_val = self.val(loss);
        if !loss_val.is_scalar() {
            return Err(Error::NonScalarLoss {
                got: loss_val.shape().to_vec(),
            });
        }
        let n = self.nodes.len();
        // Mark nodes that can influence a requires-grad leaf.
        let mut needs = vec![false; n];
        let mut inputs = Vec::new();
        for i in 0..n {
            match &self.nodes[i].op {
                Op::Leaf { requires_grad } => needs[i] = *requires_grad,
                op => {
                    op.inputs(&mut inputs);
                    needs[i] = inputs.iter().any(|j| needs[j.0]);
                }
            }
        }

        let mut grads: Vec<Option<Array>> = (0..n).map(|_| None).collect();
        if needs[loss.0] {
            grads[loss.0] = Some(Array::scalar(1.0));
        }
        for i in (0..=loss.0).rev() {
            if !needs[i] || grads[i].is_none() {
                continue;
            }
            let g = grads[i].take().expect("checked above");
            self.propagate(i, &g, &needs, &mut grads);
            // Keep leaf gradients; interior gradients are dropped once used.
            if matches!(self.nodes[i].op, Op::Leaf { .. }) {
                grads[i] = Some(g);
            }
        }
        // Zero-fill disconnected requires-grad leaves.
        for i in 0..n {
            if let Op::Leaf { requires_grad: true } = self.nodes[i].op {
                if grads[i].is_none() {
                    grads[i] = Some(Array::zeros(self.nodes[i].value.shape()));
                }
            } else {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(grads: &mut [Option<Array>], needs: &[bool], id: TensorId, delta: Array) {
        if !needs[id.0] {
            return;
        }
        match &mut grads[id.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, i: usize, g: &Array, needs: &[bool], grads: &mut [Option<Array>]) {
        let acc = Tape::accumulate;
        match &self.nodes[i].op {
            Op::Leaf { .. } => {}
            Op::Conv2d { x, k, b, stride, pad } => {
                let (dx, dk, db) = ops::conv2d_backward(self.val(*x), self.val(*k), *stride, *pad, g);
                acc(grads, needs, *x, dx);
                acc(grads, needs, *k, dk);
                acc(grads, needs, *b, db);
            }
            Op::Deconv2d { x, k, b } => {
                let (dx, dk, db) = ops::deconv2d_backward(self.val(*x), self.val(*k), g);
                acc(grads, needs, *x, dx);
                acc(grads, needs, *k, dk);
                acc(grads, needs, *b, db);
            }
            Op::LeakyRelu { x, slope } => {
                acc(grads, needs, *x, ops::leaky_relu_backward(self.val(*x), *slope, g));
            }
            Op::Add { a, b } => {
                acc(grads, needs, *a, g.clone());
                acc(grads, needs, *b, g.clone());
            }
            Op::Sub { a, b } => {
                acc(grads, needs, *a, g.clone());
                acc(grads, needs, *b, ops::scale(g, -1.0));
            }
            Op::Mul { a, b } => {
                acc(grads, needs, *a, ops::mul(g, self.val(*b)).expect("shapes checked"));
                acc(grads, needs, *b, ops::mul(g, self.val(*a)).expect("shapes checked"));
            }
            Op::Scale { x, c } => acc(grads, needs, *x, ops::scale(g, *c)),
            Op::Concat { parts } => {
                let vals: Vec<&Array> = parts.iter().map(|p| self.val(*p)).collect();
                for (part, dg) in parts.iter().zip(ops::concat_backward(&vals, g)) {
                    acc(grads, needs, *part, dg);
                }
            }
            Op::Upsample2x { x } => {
                acc(grads, needs, *x, ops::upsample2x_backward(self.val(*x).shape(), g));
            }
            Op::AvgPool2 { x } => {
                acc(grads, needs, *x, ops::avgpool2_backward(self.val(*x).shape(), g));
            }
            Op::Warp { src, flow } => {
                let (ds, df) = ops::warp_backward(self.val(*src), self.val(*flow), g);
                acc(grads, needs, *src, ds);
                acc(grads, needs, *flow, df);
            }
            Op::IntervalNll { v, loc, raw_scale, model } => {
                let (dv, dl, dr) = ops::interval_nll_backward(
                    self.val(*v),
                    self.val(*loc),
                    self.val(*raw_scale),
                    *model,
                    g,
                );
                acc(grads, needs, *v, dv);
                acc(grads, needs, *loc, dl);
                acc(grads, needs, *raw_scale, dr);
            }
            Op::Sqrt { x } => acc(grads, needs, *x, ops::sqrt_backward(self.val(*x), g)),
            Op::AddNoise { x } => acc(grads, needs, *x, g.clone()),
            Op::Sum { x } => {
                acc(grads, needs, *x, Array::full(self.val(*x).shape(), g.item()));
            }
            Op::Mean { x } => {
                let n = self.val(*x).elems() as f64;
                acc(grads, needs, *x, Array::full(self.val(*x).shape(), g.item() / n));
            }
        }
    }
}

impl Executor for Tape {
    fn constant(&mut self, a: Array) -> TensorId {
        self.push(Op::Leaf { requires_grad: false }, a)
    }

    fn value(&self, id: TensorId) -> &Array {
        self.val(id)
    }

    fn conv2d(&mut self, x: TensorId, k: TensorId, b: TensorId, stride: usize, pad: usize)
        -> Result<TensorId> {
        let v = ops::conv2d(self.val(x), self.val(k), self.val(b), stride, pad)?;
        Ok(self.push(Op::Conv2d { x, k, b, stride, pad }, v))
    }

    fn deconv2d(&mut self, x: TensorId, k: TensorId, b: TensorId) -> Result<TensorId> {
        let v = ops::deconv2d(self.val(x), self.val(k), self.val(b))?;
        Ok(self.push(Op::Deconv2d { x, k, b }, v))
    }

    fn leaky_relu(&mut self, x: TensorId, slope: f64) -> Result<TensorId> {
        let v = ops::leaky_relu(self.val(x), slope);
        Ok(self.push(Op::LeakyRelu { x, slope }, v))
    }

    fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let v = ops::add(self.val(a), self.val(b))?;
        Ok(self.push(Op::Add { a, b }, v))
    }

    fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let v = ops::sub(self.val(a), self.val(b))?;
        Ok(self.push(Op::Sub { a, b }, v))
    }

    fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let v = ops::mul(self.val(a), self.val(b))?;
        Ok(self.push(Op::Mul { a, b }, v))
    }

    fn scale(&mut self, x: TensorId, c: f64) -> Result<TensorId> {
        let v = ops::scale(self.val(x), c);
        Ok(self.push(Op::Scale { x, c }, v))
    }

    fn concat(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        let vals: Vec<&Array> = parts.iter().map(|p| self.val(*p)).collect();
        let v = ops::concat(&vals)?;
        Ok(self.push(Op::Concat { parts: parts.to_vec() }, v))
    }

    fn upsample2x(&mut self, x: TensorId) -> Result<TensorId> {
        let v = ops::upsample2x(self.val(x))?;
        Ok(self.push(Op::Upsample2x { x }, v))
    }

    fn avgpool2(&mut self, x: TensorId) -> Result<TensorId> {
        let v = ops::avgpool2(self.val(x))?;
        Ok(self.push(Op::AvgPool2 { x }, v))
    }

    fn warp(&mut self, src: TensorId, flow: TensorId) -> Result<TensorId> {
        let v = ops::warp(self.val(src), self.val(flow))?;
        Ok(self.push(Op::Warp { src, flow }, v))
    }

    fn interval_nll(
        &mut self,
        v: TensorId,
        loc: TensorId,
        raw_scale: TensorId,
        model: CdfModel,
    ) -> Result<TensorId> {
        let (bits, floored) =
            ops::interval_nll(self.val(v), self.val(loc), self.val(raw_scale), model)?;
        self.floored += floored;
        Ok(self.push(Op::IntervalNll { v, loc, raw_scale, model }, bits))
    }

    fn sqrt(&mut self, x: TensorId) -> Result<TensorId> {
        let v = ops::sqrt(self.val(x));
        Ok(self.push(Op::Sqrt { x }, v))
    }

    fn add_noise(&mut self, x: TensorId, noise: Array) -> Result<TensorId> {
        let v = ops::add(self.val(x), &noise)?;
        Ok(self.push(Op::AddNoise { x }, v))
    }

    fn sum(&mut self, x: TensorId) -> Result<TensorId> {
        let v = ops::sum(self.val(x));
        Ok(self.push(Op::Sum { x }, v))
    }

    fn mean(&mut self, x: TensorId) -> Result<TensorId> {
        let v = ops::mean(self.val(x));
        Ok(self.push(Op::Mean { x }, v))
    }

    fn floored_intervals(&self) -> usize {
        self.floored
    }
}

/// Per-leaf gradients from a backward sweep.
pub struct Gradients {
    grads: Vec<Option<Array>>,
}

impl Gradients {
    /// Gradient for a requires-grad leaf; `None` for any other node.
    pub fn wrt(&self, id: TensorId) -> Option<&Array> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Take ownership of a leaf gradient.
    pub fn take(&mut self, id: TensorId) -> Option<Array> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}
