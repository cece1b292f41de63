//! Encode-time latent optimization.
//!
//! Single-frame mode descends the motion latents (y, z) of the frame being
//! coded under the rate-distortion loss of a noise-quantized decode, while
//! tracking the best rounded decode seen so far; the result is always an
//! actually-evaluated rounded decode, so the final cost can never exceed
//! the initial one. Window mode extends the per-iteration loss to a
//! weighted sum over the next frames, coded by the frozen pipeline on top
//! of the candidate reconstruction; only the first frame's latents are
//! decision variables.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{
    decode_pass, draw_noise, encode_mv, hyper_encoder, mv_encoder, noisy_pass_on_tape,
    CheckpointData, CodecParams, ContextLatent, DecodeResult, LatentPair, PassMode, RdBreakdown,
    C_G, C_Y, C_Z,
};
use crate::error::{Error, Result};
use crate::grad::{Array, Executor, Tape};
use crate::motion::{estimate_flow, flow_net, FlowNetParams, Frame};
use crate::nn::decayed_lr;

/// Settings for the latent descent (Algorithm parameters N and eta).
#[derive(Clone, Debug)]
pub struct OptConfig {
    /// Total updating times N.
    pub iters: usize,
    /// Initial step size.
    pub lr: f64,
    /// (iteration, multiplier) step decays.
    pub lr_decay: Vec<(usize, f64)>,
    pub seed: u64,
    /// Evaluate the rounded keep-best candidate every k-th iteration.
    pub keep_best_every: usize,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            iters: 1500,
            lr: 5e-3,
            lr_decay: vec![(1200, 0.5)],
            seed: 0,
            keep_best_every: 1,
        }
    }
}

/// Step size at iteration `i`: the base rate scaled by every decay whose
/// threshold has been reached (default: 5e-3 halved at iteration 1200).
pub fn lr_schedule(iter: usize, cfg: &OptConfig) -> f64 {
    decayed_lr(cfg.lr, &cfg.lr_decay, iter)
}

/// Sliding-window settings: window size W counts the reference plus the
/// coded frame and its successors; weights index by offset from the coded
/// frame.
#[derive(Clone, Debug)]
pub struct WindowConfig {
    pub window: usize,
    pub weights: Vec<f64>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window: 3,
            weights: vec![1.0, 0.5, 0.2, 0.1],
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::Invalid(format!(
                "window size {} must be >= 2 (reference + coded frame)",
                self.window
            )));
        }
        if self.weights.len() < self.window - 1 {
            return Err(Error::Invalid(format!(
                "window size {} needs {} weights, got {}",
                self.window,
                self.window - 1,
                self.weights.len()
            )));
        }
        if self.weights[0] != 1.0 {
            return Err(Error::Invalid(format!(
                "weight for offset 0 must be 1, got {}",
                self.weights[0]
            )));
        }
        Ok(())
    }
}

/// Weighted multi-frame loss: sum of per-frame losses scaled by the window
/// weights.
pub fn window_loss(per_frame: &[f64], weights: &[f64]) -> f64 {
    per_frame
        .iter()
        .zip(weights)
        .map(|(l, w)| l * w)
        .sum()
}

/// Effective window size when coding `frame_index` (position inside the
/// GOP, 0 = intra): shrinks by one as the window reaches the GOP end,
/// floored at 2.
pub fn window_schedule(gop_length: usize, frame_index: usize, window: usize) -> usize {
    debug_assert!(frame_index < gop_length);
    let remaining = gop_length - frame_index + 1;
    window.min(remaining).max(2)
}

#[derive(Clone, Debug)]
pub struct OptStats {
    /// Rounded window cost of the initial latents.
    pub initial_cost: f64,
    /// Rounded window cost of the kept latents.
    pub final_cost: f64,
    /// Iteration that produced the kept latents (0 = initialization).
    pub best_iteration: usize,
    pub iterations_run: usize,
    /// Iterations skipped due to non-finite losses or gradients.
    pub skipped: usize,
}

#[derive(Clone, Debug)]
pub struct OptOutcome {
    /// Kept-best rounded motion latents.
    pub latents: LatentPair,
    pub g: ContextLatent,
    pub recon: Frame,
    pub breakdown: RdBreakdown,
    pub stats: OptStats,
}

struct RoundedEval {
    window_cost: f64,
    first: DecodeResult,
}

/// Rounded window cost: Dec_I on the candidate latents for the coded
/// frame, then the frozen rounded pipeline for the remaining window frames
/// on top of the candidate reconstruction.
fn eval_rounded(
    y: &Array,
    z: &Array,
    frames: &[Frame],
    reference: &Frame,
    flow_params: &FlowNetParams,
    codec: &CodecParams,
    lambda: f64,
    weights: &[f64],
) -> Result<RoundedEval> {
    let pair = LatentPair {
        y: y.clone(),
        z: z.clone(),
        state: crate::codec::QuantState::Raw,
    };
    let first = decode_pass(&pair, reference, &frames[0], codec, lambda, PassMode::Round)?;
    let mut cost = weights[0] * first.breakdown.total;
    let mut reference = first.recon.clone();
    for (j, xj) in frames[1..].iter().enumerate() {
        let flow = estimate_flow(xj, &reference, flow_params)?;
        let latents = encode_mv(&flow, codec)?;
        let out = decode_pass(&latents, &reference, xj, codec, lambda, PassMode::Round)?;
        cost += weights[j + 1] * out.breakdown.total;
        reference = out.recon;
    }
    Ok(RoundedEval {
        window_cost: cost,
        first,
    })
}

/// Shared descent loop. `frames[0]` is the frame being coded; any further
/// frames extend the per-iteration loss with the given weights.
pub(crate) fn optimize_core(
    frames: &[Frame],
    reference: &Frame,
    flow_params: &FlowNetParams,
    codec: &CodecParams,
    lambda: f64,
    weights: &[f64],
    cfg: &OptConfig,
) -> Result<OptOutcome> {
    debug_assert!(!frames.is_empty() && weights.len() >= frames.len());
    let (h8, w8) = (frames[0].height() / 8, frames[0].width() / 8);
    let (h32, w32) = (frames[0].height() / 32, frames[0].width() / 32);

    let est = estimate_flow(&frames[0], reference, flow_params)?;
    let init = encode_mv(&est, codec)?;
    let mut y = init.y;
    let mut z = init.z;

    let best0 = eval_rounded(&y, &z, frames, reference, flow_params, codec, lambda, weights)?;
    let initial_cost = best0.window_cost;
    let mut best = best0;
    let mut best_iteration = 0usize;
    let mut skipped = 0usize;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in 0..cfg.iters {
        // all noise for this iteration is drawn up front in a fixed order,
        // so skip-and-continue keeps the stream aligned
        let u_y = draw_noise(&[C_Y, h8, w8], &mut rng);
        let u_z = draw_noise(&[C_Z, h32, w32], &mut rng);
        let u_g = draw_noise(&[C_G, h8, w8], &mut rng);
        let extra_noise: Vec<(Array, Array, Array)> = frames[1..]
            .iter()
            .map(|_| {
                (
                    draw_noise(&[C_Y, h8, w8], &mut rng),
                    draw_noise(&[C_Z, h32, w32], &mut rng),
                    draw_noise(&[C_G, h8, w8], &mut rng),
                )
            })
            .collect();

        let mut tape = Tape::new();
        let codec_h = codec.bind(&mut tape, |t, a| t.constant(a.clone()));
        let y_leaf = tape.leaf(y.clone());
        let z_leaf = tape.leaf(z.clone());
        let rf = tape.constant(reference.array().clone());
        let cur = tape.constant(frames[0].array().clone());
        let y_n = tape.add_noise(y_leaf, u_y)?;
        let z_n = tape.add_noise(z_leaf, u_z)?;
        let pass0 = noisy_pass_on_tape(&mut tape, &codec_h, y_n, z_n, rf, cur, u_g, lambda)?;
        let mut loss = tape.scale(pass0.loss, weights[0])?;
        let mut prev_recon = pass0.recon;
        if !frames[1..].is_empty() {
            let flow_h = flow_params.bind(&mut tape, |t, a| t.constant(a.clone()));
            for (j, xj) in frames[1..].iter().enumerate() {
                let (u_yj, u_zj, u_gj) = extra_noise[j].clone();
                let xj_c = tape.constant(xj.array().clone());
                let flow_j = flow_net(&mut tape, &flow_h, xj_c, prev_recon)?;
                let y_j = mv_encoder(&mut tape, &codec_h, flow_j)?;
                let z_j = hyper_encoder(&mut tape, &codec_h, y_j)?;
                let y_jn = tape.add_noise(y_j, u_yj)?;
                let z_jn = tape.add_noise(z_j, u_zj)?;
                let pass_j =
                    noisy_pass_on_tape(&mut tape, &codec_h, y_jn, z_jn, prev_recon, xj_c, u_gj, lambda)?;
                let weighted = tape.scale(pass_j.loss, weights[j + 1])?;
                loss = tape.add(loss, weighted)?;
                prev_recon = pass_j.recon;
            }
        }

        let loss_val = tape.value(loss).item();
        if !loss_val.is_finite() {
            skipped += 1;
            continue;
        }
        let grads = tape.backward(loss)?;
        let g_y = grads.wrt(y_leaf).expect("leaf grad");
        let g_z = grads.wrt(z_leaf).expect("leaf grad");
        if !g_y.all_finite() || !g_z.all_finite() {
            skipped += 1;
            continue;
        }
        let eta = lr_schedule(i, cfg);
        y.add_scaled_assign(g_y, -eta);
        z.add_scaled_assign(g_z, -eta);

        if (i + 1) % cfg.keep_best_every.max(1) == 0 || i + 1 == cfg.iters {
            let cand = eval_rounded(&y, &z, frames, reference, flow_params, codec, lambda, weights)?;
            if cand.window_cost < best.window_cost {
                best = cand;
                best_iteration = i + 1;
            }
        }
    }

    let final_cost = best.window_cost;
    let first = best.first;
    Ok(OptOutcome {
        latents: first.latents,
        g: first.g,
        recon: first.recon,
        breakdown: first.breakdown,
        stats: OptStats {
            initial_cost,
            final_cost,
            best_iteration,
            iterations_run: cfg.iters,
            skipped,
        },
    })
}

/// Latent descent for one frame (window of two: reference plus the coded
/// frame).
pub fn optimize_single_frame(
    current: &Frame,
    reference: &Frame,
    ckpt: &CheckpointData,
    lambda: f64,
    cfg: &OptConfig,
) -> Result<OptOutcome> {
    let codec = require_codec(ckpt, lambda)?;
    optimize_core(
        std::slice::from_ref(current),
        reference,
        &ckpt.flow,
        codec,
        lambda,
        &[1.0],
        cfg,
    )
}

/// Sliding-window latent descent: `window_frames[0]` is coded; the rest
/// extend the loss. `window_frames.len()` must equal `wcfg.window - 1`.
pub fn optimize_window(
    window_frames: &[Frame],
    reference: &Frame,
    ckpt: &CheckpointData,
    lambda: f64,
    wcfg: &WindowConfig,
    cfg: &OptConfig,
) -> Result<OptOutcome> {
    wcfg.validate()?;
    if window_frames.len() != wcfg.window - 1 {
        return Err(Error::Invalid(format!(
            "window of {} expects {} raw frames, got {}",
            wcfg.window,
            wcfg.window - 1,
            window_frames.len()
        )));
    }
    let codec = require_codec(ckpt, lambda)?;
    optimize_core(
        window_frames,
        reference,
        &ckpt.flow,
        codec,
        lambda,
        &wcfg.weights[..wcfg.window - 1],
        cfg,
    )
}

pub(crate) fn require_codec<'c>(ckpt: &'c CheckpointData, lambda: f64) -> Result<&'c CodecParams> {
    match (&ckpt.codec, ckpt.lambda) {
        (Some(codec), Some(l)) if l == lambda => Ok(codec),
        _ => Err(Error::MissingCheckpoint { lambda }),
    }
}
