//! Bit-exact entropy coding: quantized CDF tables, a carry-less range
//! coder, and the coded-sequence container.

mod cdf;
mod container;
mod range;
#[cfg(test)]
mod tests;

pub use cdf::{build_cdfs, CdfTable};
pub use container::{Container, FrameRecord};
pub use range::{range_decode, range_encode};

/// Integer alphabet for coded latents; values are clamped to this range by
/// round-mode quantization so tables stay static and decoding stateless.
pub const ALPHABET_MIN: i32 = -64;
pub const ALPHABET_MAX: i32 = 63;
