//! End-to-end training of the codec (flow network included) under the
//! rate-distortion objective with noise-mode quantization throughout.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grad::{Array, Executor, Tape, TensorId};
use crate::motion::{flow_net, FlowNetParams, Frame};
use crate::nn::{decayed_lr, Optimizer, OptimizerKind, ParamSet, TrainLogEntry};

use super::decode::noisy_pass_on_tape;
use super::nets;
use super::params::{CodecParams, C_G};
use super::quant::draw_noise;

/// Default rate-distortion multipliers, one trained model per value.
pub const LAMBDA_GRID: [f64; 4] = [256.0, 512.0, 1024.0, 2048.0];

#[derive(Clone, Debug)]
pub struct CodecTrainConfig {
    pub iters: usize,
    pub lr: f64,
    pub lr_decay: Vec<(usize, f64)>,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for CodecTrainConfig {
    fn default() -> Self {
        CodecTrainConfig {
            iters: 300,
            lr: 1e-4,
            lr_decay: Vec::new(),
            seed: 0,
            optimizer: OptimizerKind::adam(),
        }
    }
}

/// Jointly optimize codec and flow parameters on (current, reference)
/// pairs at one lambda. Deterministic per seed; aborts on a non-finite
/// loss with the iteration index.
pub fn train_end_to_end(
    codec: &CodecParams,
    flow: &FlowNetParams,
    dataset: &[(Frame, Frame)],
    lambda: f64,
    cfg: &CodecTrainConfig,
) -> Result<(CodecParams, FlowNetParams, Vec<TrainLogEntry>)> {
    if dataset.is_empty() {
        return Err(Error::Invalid("train_end_to_end: empty dataset".into()));
    }
    let mut codec = codec.clone();
    let mut flow = flow.clone();
    let mut combined: Vec<(String, &Array)> = flow.entries();
    combined.extend(codec.entries());
    let mut opt = Optimizer::new(cfg.optimizer, &combined);
    drop(combined);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;
    let mut log = Vec::new();

    for iter in 0..cfg.iters {
        if cursor >= order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let (current, reference) = &dataset[order[cursor]];
        cursor += 1;

        let mut tape = Tape::new();
        let mut leaf_ids: Vec<TensorId> = Vec::new();
        let flow_h = flow.bind(&mut tape, |t, a| {
            let id = t.leaf(a.clone());
            leaf_ids.push(id);
            id
        });
        let codec_h = codec.bind(&mut tape, |t, a| {
            let id = t.leaf(a.clone());
            leaf_ids.push(id);
            id
        });

        let cur = tape.constant(current.array().clone());
        let rf = tape.constant(reference.array().clone());
        let est = flow_net(&mut tape, &flow_h, cur, rf)?;
        let y = nets::mv_encoder(&mut tape, &codec_h, est)?;
        let z = nets::hyper_encoder(&mut tape, &codec_h, y)?;
        let u_y = draw_noise(tape.value(y).shape(), &mut rng);
        let u_z = draw_noise(tape.value(z).shape(), &mut rng);
        let u_g = draw_noise(&[C_G, current.height() / 8, current.width() / 8], &mut rng);
        let y_n = tape.add_noise(y, u_y)?;
        let z_n = tape.add_noise(z, u_z)?;
        let pass = noisy_pass_on_tape(&mut tape, &codec_h, y_n, z_n, rf, cur, u_g, lambda)?;

        let loss_val = tape.value(pass.loss).item();
        if !loss_val.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: iter });
        }
        let grads = tape.backward(pass.loss)?;
        let gvec: Vec<Array> = leaf_ids
            .iter()
            .map(|id| grads.wrt(*id).expect("leaf grad").clone())
            .collect();
        let lr = decayed_lr(cfg.lr, &cfg.lr_decay, iter);
        let mut entries = flow.entries_mut();
        entries.extend(codec.entries_mut());
        opt.step(&mut entries, &gvec, lr);

        log.push(TrainLogEntry {
            iteration: iter,
            loss: loss_val,
        });
    }
    Ok((codec, flow, log))
}
