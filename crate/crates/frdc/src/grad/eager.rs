use crate::error::Result;
use crate::grad::ops::{self, CdfModel};
use crate::grad::{Array, Executor, TensorId};

/// Forward-only executor: computes values immediately and records nothing.
/// Decode paths run exclusively on `Eager`, so they can never build a
/// gradient tape.
#[derive(Default)]
pub struct Eager {
    values: Vec<Array>,
    floored: usize,
}

impl Eager {
    pub fn new() -> Eager {
        Eager::default()
    }

    fn push(&mut self, a: Array) -> TensorId {
        self.values.push(a);
        TensorId(self.values.len() - 1)
    }

    /// Take the value out of the arena (avoids a clone for final outputs).
    pub fn take(&mut self, id: TensorId) -> Array {
        std::mem::replace(&mut self.values[id.0], Array::zeros(&[0]))
    }
}

impl Executor for Eager {
    fn constant(&mut self, a: Array) -> TensorId {
        self.push(a)
    }

    fn value(&self, id: TensorId) -> &Array {
        &self.values[id.0]
    }

    fn conv2d(&mut self, x: TensorId, k: TensorId, b: TensorId, stride: usize, pad: usize)
        -> Result<TensorId> {
        let v = ops::conv2d(self.value(x), self.value(k), self.value(b), stride, pad)?;
        Ok(self.push(v))
    }

    fn deconv2d(&mut self, x: TensorId, k: TensorId, b: TensorId) -> Result<TensorId> {
        let v = ops::deconv2d(self.value(x), self.value(k), self.value(b))?;
        Ok(self.push(v))
    }

    fn leaky_relu(&mut self, x: TensorId, slope: f64) -> Result<TensorId> {
        let v = ops::leaky_relu(self.value(x), slope);
        Ok(self.push(v))
    }

    fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let v = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(v))
    }

    fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let v = ops::sub(self.value(a), self.value(b))?;
        Ok(self.push(v))
    }

    fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let v = ops::mul(self.value(a), self.value(b))?;
        Ok(self.push(v))
    }

    fn scale(&mut self, x: TensorId, c: f64) -> Result<TensorId> {
        let v = ops::scale(self.value(x), c);
        Ok(self.push(v))
    }

    fn concat(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        let vals: Vec<&Array> = parts.iter().map(|p| self.value(*p)).collect();
        let v = ops::concat(&vals)?;
        Ok(self.push(v))
    }

    fn upsample2x(&mut self, x: TensorId) -> Result<TensorId> {
        let v = ops::upsample2x(self.value(x))?;
        Ok(self.push(v))
    }

    fn avgpool2(&mut self, x: TensorId) -> Result<TensorId> {
        let v = ops::avgpool2(self.value(x))?;
        Ok(self.push(v))
    }

    fn warp(&mut self, src: TensorId, flow: TensorId) -> Result<TensorId> {
        let v = ops::warp(self.value(src), self.value(flow))?;
        Ok(self.push(v))
    }

    fn interval_nll(
        &mut self,
        v: TensorId,
        loc: TensorId,
        raw_scale: TensorId,
        model: CdfModel,
    ) -> Result<TensorId> {
        let (bits, floored) =
            ops::interval_nll(self.value(v), self.value(loc), self.value(raw_scale), model)?;
        self.floored += floored;
        Ok(self.push(bits))
    }

    fn sqrt(&mut self, x: TensorId) -> Result<TensorId> {
        let v = ops::sqrt(self.value(x));
        Ok(self.push(v))
    }

    fn add_noise(&mut self, x: TensorId, noise: Array) -> Result<TensorId> {
        let v = ops::add(self.value(x), &noise)?;
        Ok(self.push(v))
    }

    fn sum(&mut self, x: TensorId) -> Result<TensorId> {
        let v = ops::sum(self.value(x));
        Ok(self.push(v))
    }

    fn mean(&mut self, x: TensorId) -> Result<TensorId> {
        let v = ops::mean(self.value(x));
        Ok(self.push(v))
    }

    fn floored_intervals(&self) -> usize {
        self.floored
    }
}
