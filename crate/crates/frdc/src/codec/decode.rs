//! Coding passes.
//!
//! The inference pass (rounding quantizer, gradient-free) and the
//! optimization pass (noise quantizer, differentiable) share one pipeline,
//! differing only in the quantizer applied; both run the same kernels, so
//! integer latents under forced-zero noise reproduce the rounded pass
//! bit-exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grad::ops::CdfModel;
use crate::grad::{Array, Eager, Executor, Tape, TensorId};
use crate::motion::{FlowField, Frame};

use super::nets;
use super::params::{CodecH, CodecParams, C_G};
use super::quant::{draw_noise, round_latent, QuantMode};
use super::{ContextLatent, ContextTensor, LatentPair, QuantState, RdBreakdown};

/// Quantizer selection for a full decode pass.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PassMode {
    /// Dec_I: rounding, gradient-free.
    Round,
    /// Dec_T: fresh uniform noise drawn from this seed (y, z, then g).
    Noise { seed: u64 },
    /// Dec_T with every noise draw forced to its deterministic limit: zero
    /// for the supplied (integer) y/z, and the rounding residual for g.
    /// Runs the noise code path yet must reproduce `Round` bit-exactly.
    NoiseZero,
}

/// Handles produced by one coding pass over any executor.
pub(crate) struct PassHandles {
    pub recon: TensorId,
    pub bits_y: TensorId,
    pub bits_z: TensorId,
    pub bits_g: TensorId,
    pub g_q: TensorId,
    pub flow: TensorId,
    pub distortion: TensorId,
    pub loss: TensorId,
}

impl PassHandles {
    pub(crate) fn breakdown<E: Executor>(&self, ex: &E, lambda: f64) -> RdBreakdown {
        RdBreakdown::new(
            lambda,
            ex.value(self.distortion).item(),
            ex.value(self.bits_y).item(),
            ex.value(self.bits_z).item(),
            ex.value(self.bits_g).item(),
        )
    }
}

/// The shared pipeline from quantized motion latents to reconstruction and
/// rate-distortion terms. `quant_g` applies this pass's quantizer to the
/// raw context latent.
pub(crate) fn coding_pass<E: Executor>(
    ex: &mut E,
    h: &CodecH,
    y_q: TensorId,
    z_q: TensorId,
    reference: TensorId,
    current: TensorId,
    lambda: f64,
    quant_g: &mut dyn FnMut(&mut E, TensorId) -> Result<TensorId>,
) -> Result<PassHandles> {
    let (y_loc, y_raw_scale) = nets::hyper_decoder(ex, h, z_q)?;
    let bits_y_map = ex.interval_nll(y_q, y_loc, y_raw_scale, CdfModel::Gaussian)?;
    let bits_y = ex.sum(bits_y_map)?;
    let bits_z_map = ex.interval_nll(z_q, h.z_loc, h.z_scale_raw, CdfModel::Logistic)?;
    let bits_z = ex.sum(bits_z_map)?;

    let flow = nets::mv_decoder(ex, h, y_q)?;
    let ctx = nets::context_extractor(ex, h, reference, flow)?;
    let g_raw = nets::frame_encoder(ex, h, current, ctx)?;
    let g_q = quant_g(ex, g_raw)?;

    let ctx8 = nets::context_at_latent_res(ex, ctx)?;
    let (g_loc, g_raw_scale) = nets::temporal_prior(ex, h, ctx8)?;
    let bits_g_map = ex.interval_nll(g_q, g_loc, g_raw_scale, CdfModel::Gaussian)?;
    let bits_g = ex.sum(bits_g_map)?;

    let recon = nets::frame_decoder(ex, h, g_q, ctx8)?;

    let d = ex.sub(current, recon)?;
    let dsq = ex.mul(d, d)?;
    let distortion = ex.mean(dsq)?;
    let weighted = ex.scale(distortion, lambda)?;
    let t = ex.add(weighted, bits_y)?;
    let t = ex.add(t, bits_z)?;
    let loss = ex.add(t, bits_g)?;

    Ok(PassHandles {
        recon,
        bits_y,
        bits_z,
        bits_g,
        g_q,
        flow,
        distortion,
        loss,
    })
}

/// Output of a full (gradient-free) decode pass.
#[derive(Clone, Debug)]
pub struct DecodeResult {
    pub recon: Frame,
    pub breakdown: RdBreakdown,
    pub g: ContextLatent,
    pub decoded_flow: FlowField,
    /// Latents that went through the quantizer (handy for coding).
    pub latents: LatentPair,
    /// Probability-floored intervals across all bit estimates.
    pub floored_intervals: usize,
}

/// One full pass over raw motion latents: quantize per `mode`, decode the
/// flow, extract context, code the frame in the same mode, and assemble the
/// rate-distortion breakdown. Rounding (Dec_I) runs gradient-free; the
/// differentiable noise path used inside optimization is
/// [`noisy_pass_on_tape`].
pub fn decode_pass(
    latents: &LatentPair,
    reference: &Frame,
    current: &Frame,
    params: &CodecParams,
    lambda: f64,
    mode: PassMode,
) -> Result<DecodeResult> {
    if latents.state != QuantState::Raw {
        return Err(Error::DoubleQuantization {
            state: latents.state.name(),
        });
    }
    if reference.array().shape() != current.array().shape() {
        return Err(Error::shape(
            "decode_pass frames",
            reference.array().shape(),
            current.array().shape(),
        ));
    }

    let (gh, gw) = (current.height() / 8, current.width() / 8);
    let (y_q_arr, z_q_arr, u_g, state) = match mode {
        PassMode::Round => (
            round_latent(&latents.y),
            round_latent(&latents.z),
            None,
            QuantState::Rounded,
        ),
        PassMode::Noise { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = super::quant::noise_latent(&latents.y, &mut rng);
            let z = super::quant::noise_latent(&latents.z, &mut rng);
            let u_g = draw_noise(&[C_G, gh, gw], &mut rng);
            (y, z, Some(u_g), QuantState::Noised)
        }
        PassMode::NoiseZero => (
            latents.y.clone(),
            latents.z.clone(),
            None,
            QuantState::Noised,
        ),
    };

    let mut ex = Eager::new();
    let h = params.bind(&mut ex, |e, a| e.constant(a.clone()));
    let y_q = ex.constant(y_q_arr.clone());
    let z_q = ex.constant(z_q_arr.clone());
    let rf = ex.constant(reference.array().clone());
    let cur = ex.constant(current.array().clone());

    let mut quant_g: Box<dyn FnMut(&mut Eager, TensorId) -> Result<TensorId>> = match mode {
        PassMode::Round => Box::new(|e: &mut Eager, g: TensorId| {
            let rounded = round_latent(e.value(g));
            Ok(e.constant(rounded))
        }),
        PassMode::Noise { .. } => {
            let u = u_g.expect("drawn above");
            let mut u = Some(u);
            Box::new(move |e: &mut Eager, g: TensorId| e.add_noise(g, u.take().expect("one g")))
        }
        PassMode::NoiseZero => Box::new(|e: &mut Eager, g: TensorId| {
            // forced noise = rounding residual, staying on the noise path
            let raw = e.value(g);
            let mut resid = round_latent(raw);
            for (r, &v) in resid.data_mut().iter_mut().zip(raw.data()) {
                *r -= v;
            }
            e.add_noise(g, resid)
        }),
    };
    let out = coding_pass(&mut ex, &h, y_q, z_q, rf, cur, lambda, &mut quant_g)?;
    let breakdown = out.breakdown(&ex, lambda);

    Ok(DecodeResult {
        recon: Frame::from_array(ex.value(out.recon).clone())?,
        breakdown,
        g: ContextLatent {
            g: ex.value(out.g_q).clone(),
            state,
        },
        decoded_flow: FlowField::from_array(ex.value(out.flow).clone())?,
        latents: LatentPair {
            y: y_q_arr,
            z: z_q_arr,
            state,
        },
        floored_intervals: ex.floored_intervals(),
    })
}

/// Differentiable coding pass on an existing tape: callers provide the
/// already-noised y/z handles plus the g-noise draw.
pub(crate) fn noisy_pass_on_tape(
    tape: &mut Tape,
    h: &CodecH,
    y_noised: TensorId,
    z_noised: TensorId,
    reference: TensorId,
    current: TensorId,
    u_g: Array,
    lambda: f64,
) -> Result<PassHandles> {
    let mut u = Some(u_g);
    let mut quant_g = move |t: &mut Tape, g: TensorId| t.add_noise(g, u.take().expect("one g"));
    coding_pass(tape, h, y_noised, z_noised, reference, current, lambda, &mut quant_g)
}

/// Motion estimation is upstream; this is the latent initialization used by
/// the encoder: a 3-stage strided encoder for y and a 2-stage hyper encoder
/// for z. Extents must be divisible by 32.
pub fn encode_mv(flow: &FlowField, params: &CodecParams) -> Result<LatentPair> {
    if flow.height() % 32 != 0 || flow.width() % 32 != 0 {
        return Err(Error::Indivisible {
            context: "encode_mv flow extents",
            got: vec![flow.height(), flow.width()],
            divisor: 32,
        });
    }
    let mut ex = Eager::new();
    let h = params.bind(&mut ex, |e, a| e.constant(a.clone()));
    let f = ex.constant(flow.array().clone());
    let y = nets::mv_encoder(&mut ex, &h, f)?;
    let z = nets::hyper_encoder(&mut ex, &h, y)?;
    Ok(LatentPair {
        y: ex.value(y).clone(),
        z: ex.take(z),
        state: QuantState::Raw,
    })
}

/// Context extraction from the reference frame and decoded flow.
pub fn extract_context(
    reference: &Frame,
    decoded_flow: &FlowField,
    params: &CodecParams,
) -> Result<ContextTensor> {
    if (decoded_flow.height(), decoded_flow.width()) != (reference.height(), reference.width()) {
        return Err(Error::shape(
            "extract_context",
            &[reference.height(), reference.width()],
            &[decoded_flow.height(), decoded_flow.width()],
        ));
    }
    let mut ex = Eager::new();
    let h = params.bind(&mut ex, |e, a| e.constant(a.clone()));
    let rf = ex.constant(reference.array().clone());
    let fl = ex.constant(decoded_flow.array().clone());
    let ctx = nets::context_extractor(&mut ex, &h, rf, fl)?;
    Ok(ContextTensor::new(ex.take(ctx)))
}

/// Contextual frame coding: encode the frame conditioned on the context,
/// quantize g per `mode`, and decode the reconstruction. Returns the
/// reconstruction, the quantized context latent, and its estimated bits.
pub fn code_frame(
    current: &Frame,
    context: &ContextTensor,
    params: &CodecParams,
    mode: QuantMode,
    seed: u64,
) -> Result<(Frame, ContextLatent, f64)> {
    if (context.height(), context.width()) != (current.height(), current.width()) {
        return Err(Error::shape(
            "code_frame context",
            &[current.height(), current.width()],
            &[context.height(), context.width()],
        ));
    }
    let mut ex = Eager::new();
    let h = params.bind(&mut ex, |e, a| e.constant(a.clone()));
    let cur = ex.constant(current.array().clone());
    let ctx = ex.constant(context.array().clone());
    let g_raw = nets::frame_encoder(&mut ex, &h, cur, ctx)?;
    let (g_q_arr, state) = match mode {
        QuantMode::Round => (round_latent(ex.value(g_raw)), QuantState::Rounded),
        QuantMode::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (
                super::quant::noise_latent(ex.value(g_raw), &mut rng),
                QuantState::Noised,
            )
        }
    };
    let g_q = ex.constant(g_q_arr.clone());
    let ctx8 = nets::context_at_latent_res(&mut ex, ctx)?;
    let (g_loc, g_raw_scale) = nets::temporal_prior(&mut ex, &h, ctx8)?;
    let bits_map = ex.interval_nll(g_q, g_loc, g_raw_scale, CdfModel::Gaussian)?;
    let bits = ex.sum(bits_map)?;
    let bits_g = ex.value(bits).item();
    let recon = nets::frame_decoder(&mut ex, &h, g_q, ctx8)?;
    Ok((
        Frame::from_array(ex.take(recon))?,
        ContextLatent { g: g_q_arr, state },
        bits_g,
    ))
}

/// Decoder-side reconstruction from entropy-decoded latents; never touches
/// the current frame or any gradient machinery.
pub fn reconstruct_from_coded(
    y_hat: &Array,
    g_hat: &Array,
    reference: &Frame,
    params: &CodecParams,
) -> Result<(Frame, FlowField)> {
    let mut ex = Eager::new();
    let h = params.bind(&mut ex, |e, a| e.constant(a.clone()));
    let y = ex.constant(y_hat.clone());
    let g = ex.constant(g_hat.clone());
    let rf = ex.constant(reference.array().clone());
    let flow = nets::mv_decoder(&mut ex, &h, y)?;
    let ctx = nets::context_extractor(&mut ex, &h, rf, flow)?;
    let ctx8 = nets::context_at_latent_res(&mut ex, ctx)?;
    let recon = nets::frame_decoder(&mut ex, &h, g, ctx8)?;
    Ok((
        Frame::from_array(ex.take(recon))?,
        FlowField::from_array(ex.take(flow))?,
    ))
}
