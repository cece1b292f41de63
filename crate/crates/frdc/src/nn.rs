//! Parameter containers and the training-side optimizer.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::grad::{Array, TensorId};

/// A convolution (or transposed-convolution) layer's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub weight: Array,
    pub bias: Array,
}

/// Executor-side handles for one layer's weight and bias.
#[derive(Copy, Clone, Debug)]
pub struct LayerH {
    pub w: TensorId,
    pub b: TensorId,
}

impl ConvLayer {
    /// Plain convolution weights `[out_ch, in_ch, k, k]`, uniform in
    /// ±sqrt(1/fan_in), zero bias.
    pub fn conv(out_ch: usize, in_ch: usize, k: usize, rng: &mut ChaCha8Rng) -> ConvLayer {
        let bound = (1.0 / (in_ch * k * k) as f64).sqrt();
        ConvLayer {
            weight: Array::from_fn(&[out_ch, in_ch, k, k], |_| rng.gen_range(-bound..bound)),
            bias: Array::zeros(&[out_ch]),
        }
    }

    /// Transposed-convolution weights `[in_ch, out_ch, 3, 3]`.
    pub fn deconv(in_ch: usize, out_ch: usize, rng: &mut ChaCha8Rng) -> ConvLayer {
        let bound = (1.0 / (in_ch * 9) as f64).sqrt();
        ConvLayer {
            weight: Array::from_fn(&[in_ch, out_ch, 3, 3], |_| rng.gen_range(-bound..bound)),
            bias: Array::zeros(&[out_ch]),
        }
    }

    pub(crate) fn push_entries<'a>(
        &'a self,
        prefix: &str,
        out: &mut Vec<(String, &'a Array)>,
    ) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    pub(crate) fn push_entries_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Array)>,
    ) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        out.push((format!("{prefix}.bias"), &mut self.bias));
    }
}

/// Named parameter collection; the entry order is canonical and shared by
/// checkpointing, optimizers and tape binding.
pub trait ParamSet {
    fn entries(&self) -> Vec<(String, &Array)>;
    fn entries_mut(&mut self) -> Vec<(String, &mut Array)>;
}

/// Step rule for offline training loops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    /// p -= lr * g
    Plain,
    /// Moment-based adaptive step.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> OptimizerKind {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<Array>,
    v: Vec<Array>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, params: &[(String, &Array)]) -> Optimizer {
        let zeros: Vec<Array> = params.iter().map(|(_, a)| Array::zeros(a.shape())).collect();
        Optimizer {
            kind,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// One update step; `grads` aligns with the parameter entry order.
    pub fn step(&mut self, params: &mut [(String, &mut Array)], grads: &[Array], lr: f64) {
        debug_assert_eq!(params.len(), grads.len());
        match self.kind {
            OptimizerKind::Plain => {
                for ((_, p), g) in params.iter_mut().zip(grads) {
                    p.add_scaled_assign(g, -lr);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let bc1 = 1.0 - beta1.powi(self.t);
                let bc2 = 1.0 - beta2.powi(self.t);
                for (i, ((_, p), g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = self.m[i].data_mut();
                    let v = self.v[i].data_mut();
                    let pd = p.data_mut();
                    for (j, &gj) in g.data().iter().enumerate() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                        let mhat = m[j] / bc1;
                        let vhat = v[j] / bc2;
                        pd[j] -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Base learning rate scaled by every decay multiplier whose threshold has
/// been reached.
pub fn decayed_lr(base: f64, decay: &[(usize, f64)], iter: usize) -> f64 {
    let mut lr = base;
    for &(at, mult) in decay {
        if iter >= at {
            lr *= mult;
        }
    }
    lr
}

/// Per-iteration training log entry.
#[derive(Clone, Copy, Debug)]
pub struct TrainLogEntry {
    pub iteration: usize,
    pub loss: f64,
}
