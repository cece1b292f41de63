//! Minimal reverse-mode differentiation over dense f64 arrays.
//!
//! Networks are written once against the [`Executor`] trait and run either
//! on a recording [`Tape`] (when gradients are needed) or on the [`Eager`]
//! evaluator (pure forward, used by every decode path). Both dispatch to the
//! same kernels in [`ops`], so a taped forward pass and an eager forward
//! pass over the same values are bit-identical.

mod array;
mod check;
mod eager;
pub mod ops;
mod tape;
#[cfg(test)]
mod tests;

pub use array::Array;
pub use check::{check_gradients, CheckConfig, GradCheckReport, LeafReport};
pub use eager::Eager;
pub use ops::{CdfModel, PROB_FLOOR, SCALE_MIN};
pub use tape::{Gradients, Tape};

use crate::error::Result;

/// Handle to a tensor owned by an executor.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

/// Execution context for the primitive set. `Tape` records for reverse-mode
/// differentiation; `Eager` only computes values.
pub trait Executor {
    /// Insert a value the graph treats as constant.
    fn constant(&mut self, a: Array) -> TensorId;

    fn value(&self, id: TensorId) -> &Array;

    fn conv2d(&mut self, x: TensorId, k: TensorId, b: TensorId, stride: usize, pad: usize)
        -> Result<TensorId>;
    fn deconv2d(&mut self, x: TensorId, k: TensorId, b: TensorId) -> Result<TensorId>;
    fn leaky_relu(&mut self, x: TensorId, slope: f64) -> Result<TensorId>;
    fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId>;
    fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId>;
    fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId>;
    fn scale(&mut self, x: TensorId, c: f64) -> Result<TensorId>;
    fn concat(&mut self, parts: &[TensorId]) -> Result<TensorId>;
    fn upsample2x(&mut self, x: TensorId) -> Result<TensorId>;
    fn avgpool2(&mut self, x: TensorId) -> Result<TensorId>;
    fn warp(&mut self, src: TensorId, flow: TensorId) -> Result<TensorId>;
    fn interval_nll(
        &mut self,
        v: TensorId,
        loc: TensorId,
        raw_scale: TensorId,
        model: CdfModel,
    ) -> Result<TensorId>;
    fn sqrt(&mut self, x: TensorId) -> Result<TensorId>;
    /// Adds a fixed noise draw; the noise is a constant in the backward pass.
    fn add_noise(&mut self, x: TensorId, noise: Array) -> Result<TensorId>;
    fn sum(&mut self, x: TensorId) -> Result<TensorId>;
    fn mean(&mut self, x: TensorId) -> Result<TensorId>;

    /// Cumulative count of probability-floored intervals across all
    /// `interval_nll` calls on this executor (diagnostics).
    fn floored_intervals(&self) -> usize;
}

/// Number of `Tape`s constructed since process start. Decode paths must not
/// build gradient tapes; tests assert this stays flat across decodes.
pub fn tapes_created() -> u64 {
    tape::TAPES_CREATED.load(std::sync::atomic::Ordering::Relaxed)
}
