//! The two quantization modes: rounding (true inference) and additive
//! uniform noise (the differentiable proxy used inside optimization).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bitstream::{ALPHABET_MAX, ALPHABET_MIN};
use crate::error::{Error, Result};
use crate::grad::Array;

use super::{ContextLatent, LatentPair, QuantState};

/// Quantizer selection for a coding pass.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum QuantMode {
    /// Nearest integer, ties away from zero; clamped to the coding alphabet.
    Round,
    /// Fresh i.i.d. uniform(-0.5, 0.5) noise per call.
    Noise,
}

/// Round to nearest (ties away from zero) and clamp to the coded alphabet.
pub fn round_latent(a: &Array) -> Array {
    a.map(|v| v.round().clamp(ALPHABET_MIN as f64, ALPHABET_MAX as f64))
}

/// Add one fresh uniform(-0.5, 0.5) draw per element.
pub fn noise_latent(a: &Array, rng: &mut ChaCha8Rng) -> Array {
    let mut out = a.clone();
    for v in out.data_mut() {
        *v += rng.gen_range(-0.5..0.5);
    }
    out
}

/// Draw a noise array without applying it (for tape-side injection).
pub fn draw_noise(shape: &[usize], rng: &mut ChaCha8Rng) -> Array {
    Array::from_fn(shape, |_| rng.gen_range(-0.5..0.5))
}

/// Quantize a raw motion-latent pair. Noise mode draws y's noise first,
/// then z's, from a stream seeded with `seed`.
pub fn quantize(pair: &LatentPair, mode: QuantMode, seed: u64) -> Result<LatentPair> {
    if pair.state != QuantState::Raw {
        return Err(Error::DoubleQuantization {
            state: pair.state.name(),
        });
    }
    Ok(match mode {
        QuantMode::Round => LatentPair {
            y: round_latent(&pair.y),
            z: round_latent(&pair.z),
            state: QuantState::Rounded,
        },
        QuantMode::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            LatentPair {
                y: noise_latent(&pair.y, &mut rng),
                z: noise_latent(&pair.z, &mut rng),
                state: QuantState::Noised,
            }
        }
    })
}

/// Quantize a raw context latent.
pub fn quantize_context(g: &ContextLatent, mode: QuantMode, seed: u64) -> Result<ContextLatent> {
    if g.state != QuantState::Raw {
        return Err(Error::DoubleQuantization {
            state: g.state.name(),
        });
    }
    Ok(match mode {
        QuantMode::Round => ContextLatent {
            g: round_latent(&g.g),
            state: QuantState::Rounded,
        },
        QuantMode::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ContextLatent {
                g: noise_latent(&g.g, &mut rng),
                state: QuantState::Noised,
            }
        }
    })
}
