//! Differentiable code-length estimates for quantized latents.

use crate::error::{Error, Result};
use crate::grad::ops::{interval_nll, CdfModel};
use crate::grad::Array;

/// Entropy model for a latent stream: interval mass under a parameterized
/// cumulative, scale mapped through softplus with a fixed lower bound.
pub enum EntropyModel<'a> {
    /// Per-channel learned logistic (the hyperprior latent's model).
    FactorizedLogistic { loc: &'a Array, raw_scale: &'a Array },
    /// Elementwise Gaussian with predicted parameters (y's model from the
    /// hyper decoder, g's from the temporal prior).
    ConditionalGaussian { loc: &'a Array, raw_scale: &'a Array },
}

/// Estimated bits to code `latent` (rounded or noised values) under the
/// model: sum of -log2 interval masses, floored at 2^-16. Also returns the
/// count of floored intervals (diagnostics).
pub fn bits_estimate(latent: &Array, model: &EntropyModel) -> Result<(f64, usize)> {
    if !latent.all_finite() {
        return Err(Error::Invalid("bits_estimate: non-finite latent".into()));
    }
    let (bits, floored) = match model {
        EntropyModel::FactorizedLogistic { loc, raw_scale } => {
            interval_nll(latent, loc, raw_scale, CdfModel::Logistic)?
        }
        EntropyModel::ConditionalGaussian { loc, raw_scale } => {
            interval_nll(latent, loc, raw_scale, CdfModel::Gaussian)?
        }
    };
    let mut total = 0.0;
    for v in bits.data() {
        total += v;
    }
    Ok((total, floored))
}
