//! The conditional video codec: motion-latent autoencoder with hyperprior,
//! context extraction, contextual frame coding, entropy models, the two
//! quantization modes, and end-to-end training.

mod ckpt;
mod decode;
mod entropy;
mod nets;
mod params;
mod quant;
#[cfg(test)]
mod tests;
mod train;

pub use ckpt::{load_checkpoint, save_codec_checkpoint, save_flow_checkpoint, CheckpointData};
pub use decode::{
    code_frame, decode_pass, encode_mv, extract_context, reconstruct_from_coded, DecodeResult,
    PassMode,
};
pub(crate) use decode::noisy_pass_on_tape;
pub use entropy::{bits_estimate, EntropyModel};
pub use nets::{
    context_at_latent_res, context_extractor, frame_decoder, frame_encoder, hyper_decoder,
    hyper_encoder, mv_decoder, mv_encoder, temporal_prior,
};
pub use params::{CodecH, CodecParams, C_CTX, C_G, C_Y, C_Z};
pub use quant::{draw_noise, noise_latent, quantize, quantize_context, round_latent, QuantMode};
pub use train::{train_end_to_end, CodecTrainConfig, LAMBDA_GRID};

use crate::grad::Array;

/// Quantization state tag carried by latents.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum QuantState {
    Raw,
    Rounded,
    Noised,
}

impl QuantState {
    pub fn name(self) -> &'static str {
        match self {
            QuantState::Raw => "raw",
            QuantState::Rounded => "rounded",
            QuantState::Noised => "noised",
        }
    }
}

/// Motion latent y (1/8 grid) and hyperprior z (1/32 grid).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPair {
    pub y: Array,
    pub z: Array,
    pub state: QuantState,
}

/// Contextual-frame latent g (1/8 grid).
#[derive(Clone, Debug, PartialEq)]
pub struct ContextLatent {
    pub g: Array,
    pub state: QuantState,
}

/// Full-resolution conditioning features extracted from (reference,
/// decoded flow).
#[derive(Clone, Debug, PartialEq)]
pub struct ContextTensor {
    data: Array,
}

impl ContextTensor {
    pub(crate) fn new(data: Array) -> ContextTensor {
        ContextTensor { data }
    }

    pub fn array(&self) -> &Array {
        &self.data
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }
}

/// One frame's rate-distortion accounting: total = lambda*D + bits.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RdBreakdown {
    pub lambda: f64,
    pub distortion: f64,
    pub bits_y: f64,
    pub bits_z: f64,
    pub bits_g: f64,
    pub total: f64,
}

impl RdBreakdown {
    pub fn new(lambda: f64, distortion: f64, bits_y: f64, bits_z: f64, bits_g: f64) -> RdBreakdown {
        RdBreakdown {
            lambda,
            distortion,
            bits_y,
            bits_z,
            bits_g,
            total: lambda * distortion + bits_y + bits_z + bits_g,
        }
    }

    /// Recompute the total from the stored fields (must equal `total`).
    pub fn recompute_total(&self) -> f64 {
        self.lambda * self.distortion + self.bits_y + self.bits_z + self.bits_g
    }

    pub fn estimated_bits(&self) -> f64 {
        self.bits_y + self.bits_z + self.bits_g
    }
}
