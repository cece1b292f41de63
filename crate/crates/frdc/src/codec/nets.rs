//! Codec network blocks, written once against the executor trait.
//!
//! Encoders downsample with 5x5 stride-2 convolutions; decoders upsample
//! with 3x3 stride-2 transposed convolutions; everything else is 3x3.

use crate::error::Result;
use crate::grad::{Executor, TensorId};
use crate::motion::LEAKY_SLOPE;

use super::params::CodecH;

/// Motion-latent encoder: flow `[2,h,w]` -> y `[C_Y, h/8, w/8]`.
pub fn mv_encoder<E: Executor>(ex: &mut E, h: &CodecH, flow: TensorId) -> Result<TensorId> {
    let t = ex.conv2d(flow, h.mv_enc[0].w, h.mv_enc[0].b, 2, 2)?;
    let t = ex.leaky_relu(t, LEAKY_SLOPE)?;
    let t = ex.conv2d(t, h.mv_enc[1].w, h.mv_enc[1].b, 2, 2)?;
    let t = ex.leaky_relu(t, LEAKY_SLOPE)?;
    ex.conv2d(t, h.mv_enc[2].w, h.mv_enc[2].b, 2, 2)
}

/// Hyper encoder: y -> z `[C_Z, h/32, w/32]`.
pub fn hyper_encoder<E: Executor>(ex: &mut E, h: &CodecH, y: TensorId) -> Result<TensorId> {
    let t = ex.conv2d(y, h.hyper_enc[0].w, h.hyper_enc[0].b, 2, 2)?;
    let t = ex.leaky_relu(t, LEAKY_SLOPE)?;
    ex.conv2d(t, h.hyper_enc[1].w, h.hyper_enc[1].b, 2, 2)
}

/// Hyper decoder: quantized z -> (location, raw scale) for y's model.
pub fn hyper_decoder<E: Executor>(
    ex: &mut E,
    h: &CodecH,
    z_q: TensorId,
) -> Result<(TensorId, TensorId)> {
    let t = ex.deconv2d(z_q, h.hyper_dec_mid.w, h.hyper_dec_mid.b)?;
    let t = ex.leaky_relu(t, LEAKY_SLOPE)?;
    let loc = ex.deconv2d(t, h.hyper_dec_loc.w, h.hyper_dec_loc.b)?;
    let raw_scale = ex.deconv2d(t, h.hyper_dec_scale.w, h.hyper_dec_scale.b)?;
    Ok((loc, raw_scale))
}

/// Motion-latent decoder: quantized y -> decoded flow `[2,h,w]`.
pub fn mv_decoder<E: Executor>(ex: &mut E, h: &CodecH, y_q: TensorId) -> Result<TensorId> {
    let t = ex.deconv2d(y_q, h.mv_dec[0].w, h.mv_dec[0].b)?;
    let t = ex.leaky_relu(t, LEAKY_SLOPE)?;
    let t = ex.deconv2d(t, h.mv_dec[1].w, h.mv_dec[1].b)?;
    let t = ex.leaky_relu(t, LEAKY_SLOPE)?;
    ex.deconv2d(t, h.mv_dec[2].w, h.mv_dec[2].b)
}

/// Context extraction: reference features warped by the decoded flow, then
/// refined to `C_CTX` channels at full resolution.
pub fn context_extractor<E: Executor>(
    ex: &mut E,
    h: &CodecH,
    reference: TensorId,
    decoded_flow: TensorId,
) -> Result<TensorId> {
    let feat = ex.conv2d(reference, h.ctx_feat.w, h.ctx_feat.b, 1, 1)?;
    let feat = ex.leaky_relu(feat, LEAKY_SLOPE)?;
    let warped = ex.warp(feat, decoded_flow)?;
    ex.conv2d(warped, h.ctx_refine.w, h.ctx_refine.b, 1, 1)
}

/// Contextual encoder: (frame ⊕ context) -> g `[C_G, h/8, w/8]`.
pub fn frame_encoder<E: Executor>(
    ex: &mut E,
    h: &CodecH,
    current: TensorId,
    ctx: TensorId,
) -> Result<TensorId> {
    let t = ex.concat(&[current, ctx])?;
    let t = ex.conv2d(t, h.frame_enc[0].w, h.frame_enc[0].b, 2, 2)?;
    let t = ex.leaky_relu(t, LEAKY_SLOPE)?;
    let t = ex.conv2d(t, h.frame_enc[1].w, h.frame_enc[1].b, 2, 2)?;
    let t = ex.leaky_relu(t, LEAKY_SLOPE)?;
    ex.conv2d(t, h.frame_enc[2].w, h.frame_enc[2].b, 2, 2)
}

/// Context pooled down to the latent grid (three 2x average pools).
pub fn context_at_latent_res<E: Executor>(ex: &mut E, ctx: TensorId) -> Result<TensorId> {
    let t = ex.avgpool2(ctx)?;
    let t = ex.avgpool2(t)?;
    ex.avgpool2(t)
}

/// Contextual decoder: (quantized g ⊕ pooled context) -> reconstruction.
pub fn frame_decoder<E: Executor>(
    ex: &mut E,
    h: &CodecH,
    g_q: TensorId,
    ctx8: TensorId,
) -> Result<TensorId> {
    let t = ex.concat(&[g_q, ctx8])?;
    let t = ex.deconv2d(t, h.frame_dec[0].w, h.frame_dec[0].b)?;
    let t = ex.leaky_relu(t, LEAKY_SLOPE)?;
    let t = ex.deconv2d(t, h.frame_dec[1].w, h.frame_dec[1].b)?;
    let t = ex.leaky_relu(t, LEAKY_SLOPE)?;
    let t = ex.deconv2d(t, h.frame_dec[2].w, h.frame_dec[2].b)?;
    let t = ex.leaky_relu(t, LEAKY_SLOPE)?;
    ex.conv2d(t, h.recon_head.w, h.recon_head.b, 1, 1)
}

/// Temporal-prior parameter network: pooled context -> (location, raw
/// scale) for g's model.
pub fn temporal_prior<E: Executor>(
    ex: &mut E,
    h: &CodecH,
    ctx8: TensorId,
) -> Result<(TensorId, TensorId)> {
    let t = ex.conv2d(ctx8, h.tprior_mid.w, h.tprior_mid.b, 1, 1)?;
    let t = ex.leaky_relu(t, LEAKY_SLOPE)?;
    let loc = ex.conv2d(t, h.tprior_loc.w, h.tprior_loc.b, 1, 1)?;
    let raw_scale = ex.conv2d(t, h.tprior_scale.w, h.tprior_scale.b, 1, 1)?;
    Ok((loc, raw_scale))
}
