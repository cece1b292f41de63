//! Frames, dense flow fields, block motion-vector labels, the warp
//! operation, the flow-supervision loss, and the pyramid flow estimator.

mod finetune;
mod flownet;
#[cfg(test)]
mod tests;

pub use finetune::{finetune_flow, FinetuneConfig};
pub use flownet::{estimate_flow, flow_net, FlowNetH, FlowNetParams, LEAKY_SLOPE};

use crate::error::{Error, Result};
use crate::grad::{ops, Array};

/// A frame as `[channels, height, width]` samples. Source frames live in
/// [0,1]; reconstructions may exceed that range and are clamped only when
/// written to 8-bit files.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    data: Array,
}

impl Frame {
    pub fn from_array(data: Array) -> Result<Frame> {
        data.dims3("Frame")?;
        if !data.all_finite() {
            return Err(Error::Invalid("frame contains non-finite samples".into()));
        }
        Ok(Frame { data })
    }

    pub fn array(&self) -> &Array {
        &self.data
    }

    pub fn into_array(self) -> Array {
        self.data
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    /// Mean squared error over all channels jointly.
    pub fn mse(&self, other: &Frame) -> Result<f64> {
        if self.data.shape() != other.data.shape() {
            return Err(Error::shape("Frame::mse", self.data.shape(), other.data.shape()));
        }
        let mut acc = 0.0;
        for (a, b) in self.data.data().iter().zip(other.data.data()) {
            let d = a - b;
            acc += d * d;
        }
        Ok(acc / self.data.elems() as f64)
    }
}

/// Dense per-pixel motion: channel 0 is the horizontal component (positive
/// right), channel 1 the vertical component (positive down), pixel units.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    data: Array,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> FlowField {
        FlowField {
            data: Array::zeros(&[2, height, width]),
        }
    }

    pub fn from_array(data: Array) -> Result<FlowField> {
        let (c, _, _) = data.dims3("FlowField")?;
        if c != 2 {
            return Err(Error::shape("FlowField channels", &[2], &[c]));
        }
        if !data.all_finite() {
            return Err(Error::Invalid("flow field contains non-finite components".into()));
        }
        Ok(FlowField { data })
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

    /// (horizontal, vertical) motion at a pixel.
    pub fn at(&self, y: usize, x: usize) -> (f64, f64) {
        (self.data.get3(0, y, x), self.data.get3(1, y, x))
    }
}

/// Quarter-resolution-style block motion labels in fractional-pel integer
/// units: grid cell `(gy,gx)` covers the `stride x stride` pixel block at
/// `(gy*stride, gx*stride)`, and stores `(v_i, v_j) * precision`.
#[derive(Clone, Debug, PartialEq)]
pub struct MvLabelGrid {
    pub frame_width: usize,
    pub frame_height: usize,
    pub stride: usize,
    pub precision: usize,
    pub metadata: String,
    cells: Vec<(i16, i16)>,
}

impl MvLabelGrid {
    pub fn new(
        frame_width: usize,
        frame_height: usize,
        stride: usize,
        precision: usize,
        metadata: String,
        cells: Vec<(i16, i16)>,
    ) -> Result<MvLabelGrid> {
        if stride == 0 || precision == 0 {
            return Err(Error::Invalid(format!(
                "label grid stride {stride} and precision {precision} must be >= 1"
            )));
        }
        let gw = frame_width.div_ceil(stride);
        let gh = frame_height.div_ceil(stride);
        if cells.len() != gw * gh {
            return Err(Error::shape("MvLabelGrid cells", &[gw * gh], &[cells.len()]));
        }
        Ok(MvLabelGrid {
            frame_width,
            frame_height,
            stride,
            precision,
            metadata,
            cells,
        })
    }

    pub fn grid_width(&self) -> usize {
        self.frame_width.div_ceil(self.stride)
    }

    pub fn grid_height(&self) -> usize {
        self.frame_height.div_ceil(self.stride)
    }

    pub fn cell(&self, gy: usize, gx: usize) -> (i16, i16) {
        self.cells[gy * self.grid_width() + gx]
    }

    pub fn cells(&self) -> &[(i16, i16)] {
        &self.cells
    }
}

/// Motion-compensated prediction: samples `reference` at each pixel's
/// flow-displaced position (bilinear, border clamped). Differentiable w.r.t.
/// both inputs through the tape version of the same kernel.
pub fn warp(reference: &Frame, flow: &FlowField) -> Result<Frame> {
    if (flow.height(), flow.width()) != (reference.height(), reference.width()) {
        return Err(Error::shape(
            "warp flow vs frame",
            &[reference.height(), reference.width()],
            &[flow.height(), flow.width()],
        ));
    }
    Frame::from_array(ops::warp(reference.array(), flow.array())?)
}

/// Mean endpoint error: average Euclidean distance between flow vectors.
pub fn epe(flow: &FlowField, label: &FlowField) -> Result<f64> {
    if flow.array().shape() != label.array().shape() {
        return Err(Error::shape("epe", flow.array().shape(), label.array().shape()));
    }
    let (h, w) = (flow.height(), flow.width());
    let f = flow.array().data();
    let l = label.array().data();
    let plane = h * w;
    let mut acc = 0.0;
    for p in 0..plane {
        let di = f[p] - l[p];
        let dj = f[plane + p] - l[plane + p];
        acc += (di * di + dj * dj).sqrt();
    }
    Ok(acc / plane as f64)
}

/// Motion-estimation objective: EPE against the label field plus
/// `lambda_me` times the MSE between the current frame and the warped
/// reference.
pub fn me_loss(
    current: &Frame,
    reference: &Frame,
    flow: &FlowField,
    label: &FlowField,
    lambda_me: f64,
) -> Result<f64> {
    let warped = warp(reference, flow)?;
    Ok(epe(flow, label)? + lambda_me * current.mse(&warped)?)
}

/// Nearest-neighbor upsampling of the block grid to full resolution, then
/// conversion from fractional-pel integers to pixel units (divide by the
/// precision denominator).
pub fn densify_labels(grid: &MvLabelGrid) -> FlowField {
    let (h, w) = (grid.frame_height, grid.frame_width);
    let s = grid.stride;
    let inv_p = 1.0 / grid.precision as f64;
    let mut data = Array::zeros(&[2, h, w]);
    let plane = h * w;
    {
        let d = data.data_mut();
        for y in 0..h {
            let gy = y / s;
            for x in 0..w {
                let (vi, vj) = grid.cell(gy, x / s);
                d[y * w + x] = vi as f64 * inv_p;
                d[plane + y * w + x] = vj as f64 * inv_p;
            }
        }
    }
    FlowField { data }
}
