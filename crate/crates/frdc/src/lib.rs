//! frdc: a desk-scale learned video codec.
//!
//! The pipeline estimates dense motion with a coarse-to-fine pyramid flow
//! network, compresses the motion field through a latent autoencoder with a
//! hyperprior, codes each frame conditioned on a motion-compensated context,
//! and emits a real range-coded bitstream. Two enhancement stages wrap the
//! codec: offline fine-tuning of the flow network against block-motion
//! labels, and online gradient descent on the motion latents under the
//! rate-distortion objective at encode time (the decoder is untouched).

pub mod bitstream;
pub mod codec;
mod detmath;
pub mod error;
pub mod eval;
pub mod grad;
pub mod io;
pub mod motion;
pub mod online;
pub mod nn;

pub use error::{Error, Result};
