//! Offline fine-tuning of the flow network against block-MV labels.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grad::{Array, Executor, Tape, TensorId};
use crate::motion::flownet::{flow_net, FlowNetParams};
use crate::motion::{densify_labels, Frame, MvLabelGrid};
use crate::nn::{decayed_lr, Optimizer, OptimizerKind, ParamSet, TrainLogEntry};

#[derive(Clone, Debug)]
pub struct FinetuneConfig {
    /// Trade-off between the endpoint-error term and the warp-MSE term.
    pub lambda_me: f64,
    pub iters: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// (iteration, multiplier) step decays.
    pub lr_decay: Vec<(usize, f64)>,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            lambda_me: 100.0,
            iters: 500,
            batch_size: 2,
            lr: 1e-4,
            lr_decay: Vec::new(),
            seed: 0,
            optimizer: OptimizerKind::adam(),
        }
    }
}

/// EPE + lambda * warp-MSE on the tape. The channel reduction inside the
/// endpoint norm is a 1x1 convolution with a fixed all-ones kernel.
pub(crate) fn me_loss_taped(
    tape: &mut Tape,
    flow: TensorId,
    label: TensorId,
    current: TensorId,
    reference: TensorId,
    lambda_me: f64,
) -> Result<TensorId> {
    let diff = tape.sub(flow, label)?;
    let sq = tape.mul(diff, diff)?;
    let ones = tape.constant(Array::full(&[1, 2, 1, 1], 1.0));
    let zero = tape.constant(Array::zeros(&[1]));
    let norm2 = tape.conv2d(sq, ones, zero, 1, 0)?;
    let norm = tape.sqrt(norm2)?;
    let epe = tape.mean(norm)?;

    let warped = tape.warp(reference, flow)?;
    let d = tape.sub(current, warped)?;
    let dsq = tape.mul(d, d)?;
    let mse = tape.mean(dsq)?;
    let weighted = tape.scale(mse, lambda_me)?;
    tape.add(epe, weighted)
}

/// Gradient descent on the motion-estimation objective over a labelled
/// corpus. Deterministic for a fixed seed; batch composition reshuffles
/// per epoch from the seeded stream. Returns the updated parameters and a
/// per-epoch loss log.
pub fn finetune_flow(
    params: &FlowNetParams,
    dataset: &[(Frame, Frame, MvLabelGrid)],
    cfg: &FinetuneConfig,
) -> Result<(FlowNetParams, Vec<TrainLogEntry>)> {
    if dataset.is_empty() {
        return Err(Error::Invalid("finetune_flow: empty dataset".into()));
    }
    if cfg.lambda_me <= 0.0 {
        return Err(Error::Invalid(format!(
            "finetune_flow: lambda_me {} must be > 0",
            cfg.lambda_me
        )));
    }
    let labels: Vec<Array> = dataset
        .iter()
        .map(|(_, _, grid)| densify_labels(grid).array().clone())
        .collect();

    let mut params = params.clone();
    let mut opt = Optimizer::new(cfg.optimizer, &params.entries());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;

    let epoch_len = dataset.len().div_ceil(cfg.batch_size.max(1)).max(1);
    let mut log = Vec::new();
    let mut epoch_acc = 0.0;
    let mut epoch_n = 0usize;

    for iter in 0..cfg.iters {
        let mut tape = Tape::new();
        let mut leaf_ids: Vec<TensorId> = Vec::new();
        let handles = params.bind(&mut tape, |t, a| {
            let id = t.leaf(a.clone());
            leaf_ids.push(id);
            id
        });

        let batch = cfg.batch_size.max(1).min(dataset.len());
        let mut total: Option<TensorId> = None;
        for _ in 0..batch {
            if cursor >= order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let idx = order[cursor];
            cursor += 1;
            let (cur, rf, _) = &dataset[idx];
            let c = tape.constant(cur.array().clone());
            let r = tape.constant(rf.array().clone());
            let l = tape.constant(labels[idx].clone());
            let flow = flow_net(&mut tape, &handles, c, r)?;
            let item = me_loss_taped(&mut tape, flow, l, c, r, cfg.lambda_me)?;
            total = Some(match total {
                Some(t) => tape.add(t, item)?,
                None => item,
            });
        }
        let total = total.expect("batch >= 1");
        let loss = tape.scale(total, 1.0 / batch as f64)?;
        let loss_val = tape.value(loss).item();
        if !loss_val.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: iter });
        }

        let grads = tape.backward(loss)?;
        let gvec: Vec<Array> = leaf_ids
            .iter()
            .map(|id| grads.wrt(*id).expect("leaf grad").clone())
            .collect();
        let lr = decayed_lr(cfg.lr, &cfg.lr_decay, iter);
        opt.step(&mut params.entries_mut(), &gvec, lr);

        epoch_acc += loss_val;
        epoch_n += 1;
        if epoch_n == epoch_len || iter + 1 == cfg.iters {
            log.push(TrainLogEntry {
                iteration: iter,
                loss: epoch_acc / epoch_n as f64,
            });
            epoch_acc = 0.0;
            epoch_n = 0;
        }
    }
    Ok((params, log))
}
