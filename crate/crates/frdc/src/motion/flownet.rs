//! Coarse-to-fine pyramid flow estimator.
//!
//! Each level predicts a residual flow from (current, warped reference,
//! upsampled coarser flow) at that level's resolution; the finest level's
//! output is the estimate. With zero-initialized final layers the network
//! outputs identically zero flow at every level.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grad::{Array, Eager, Executor, TensorId};
use crate::motion::{FlowField, Frame};
use crate::nn::{ConvLayer, LayerH, ParamSet};

/// Hidden width inside each level.
pub const LEVEL_HIDDEN: usize = 16;
/// Leaky-rectification slope used throughout the codec.
pub const LEAKY_SLOPE: f64 = 0.1;

/// Pyramid flow-network parameters; `levels[0]` is the finest level.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowNetParams {
    pub levels: Vec<[ConvLayer; 4]>,
}

impl FlowNetParams {
    /// Random initialization for `channels`-channel frames. The residual
    /// head starts at zero so the initial estimate is zero flow.
    pub fn init(channels: usize, levels: usize, seed: u64) -> FlowNetParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_ch = 2 * channels + 2;
        let lv = (0..levels)
            .map(|_| {
                [
                    ConvLayer::conv(LEVEL_HIDDEN, in_ch, 3, &mut rng),
                    ConvLayer::conv(LEVEL_HIDDEN, LEVEL_HIDDEN, 3, &mut rng),
                    ConvLayer::conv(LEVEL_HIDDEN, LEVEL_HIDDEN, 3, &mut rng),
                    ConvLayer {
                        weight: Array::zeros(&[2, LEVEL_HIDDEN, 3, 3]),
                        bias: Array::zeros(&[2]),
                    },
                ]
            })
            .collect();
        FlowNetParams { levels: lv }
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// Frame channel count the parameters were built for.
    pub fn channels(&self) -> usize {
        let in_ch = self.levels[0][0].weight.shape()[1];
        (in_ch - 2) / 2
    }

    /// Rebuild from checkpoint entries named `flow.level{k}.conv{j}.*`.
    pub fn from_entries(
        map: &std::collections::BTreeMap<String, Array>,
    ) -> Result<FlowNetParams> {
        let get = |name: String| -> Result<Array> {
            map.get(&name).cloned().ok_or_else(|| {
                crate::error::Error::CorruptFile {
                    what: "checkpoint",
                    detail: format!("missing entry {name}"),
                }
            })
        };
        let mut levels = Vec::new();
        for k in 0.. {
            if !map.contains_key(&format!("flow.level{k}.conv0.weight")) {
                break;
            }
            let mut convs = Vec::with_capacity(4);
            for j in 0..4 {
                convs.push(ConvLayer {
                    weight: get(format!("flow.level{k}.conv{j}.weight"))?,
                    bias: get(format!("flow.level{k}.conv{j}.bias"))?,
                });
            }
            levels.push([
                convs.remove(0),
                convs.remove(0),
                convs.remove(0),
                convs.remove(0),
            ]);
        }
        if levels.is_empty() {
            return Err(crate::error::Error::CorruptFile {
                what: "checkpoint",
                detail: "no flow network levels found".into(),
            });
        }
        Ok(FlowNetParams { levels })
    }

    /// Upload parameters into an executor; `add` decides leaf vs constant.
    /// Traversal order matches `entries()`.
    pub fn bind<E: Executor>(
        &self,
        ex: &mut E,
        mut add: impl FnMut(&mut E, &Array) -> TensorId,
    ) -> FlowNetH {
        let levels = self
            .levels
            .iter()
            .map(|convs| {
                let mut out = Vec::with_capacity(4);
                for layer in convs {
                    let w = add(ex, &layer.weight);
                    let b = add(ex, &layer.bias);
                    out.push(LayerH { w, b });
                }
                [out[0], out[1], out[2], out[3]]
            })
            .collect();
        FlowNetH { levels }
    }
}

impl ParamSet for FlowNetParams {
    fn entries(&self) -> Vec<(String, &Array)> {
        let mut out = Vec::new();
        for (k, convs) in self.levels.iter().enumerate() {
            for (j, layer) in convs.iter().enumerate() {
                layer.push_entries(&format!("flow.level{k}.conv{j}"), &mut out);
            }
        }
        out
    }

    fn entries_mut(&mut self) -> Vec<(String, &mut Array)> {
        let mut out = Vec::new();
        for (k, convs) in self.levels.iter_mut().enumerate() {
            for (j, layer) in convs.iter_mut().enumerate() {
                layer.push_entries_mut(&format!("flow.level{k}.conv{j}"), &mut out);
            }
        }
        out
    }
}

/// Executor-side handles for the flow network.
pub struct FlowNetH {
    pub levels: Vec<[LayerH; 4]>,
}

/// Pyramid forward pass over any executor. `current`/`reference` are
/// `[c,h,w]` handles with extents divisible by `2^(levels-1)`.
pub fn flow_net<E: Executor>(
    ex: &mut E,
    h: &FlowNetH,
    current: TensorId,
    reference: TensorId,
) -> Result<TensorId> {
    let levels = h.levels.len();
    let mut curs = vec![current];
    let mut refs = vec![reference];
    for k in 1..levels {
        curs.push(ex.avgpool2(curs[k - 1])?);
        refs.push(ex.avgpool2(refs[k - 1])?);
    }
    let (_, ch, cw) = ex.value(curs[levels - 1]).dims3("flow_net coarsest")?;
    let mut upflow = ex.constant(Array::zeros(&[2, ch, cw]));
    let mut flow = upflow;
    for k in (0..levels).rev() {
        let warped = ex.warp(refs[k], upflow)?;
        let mut t = ex.concat(&[curs[k], warped, upflow])?;
        for layer in &h.levels[k][..3] {
            t = ex.conv2d(t, layer.w, layer.b, 1, 1)?;
            t = ex.leaky_relu(t, LEAKY_SLOPE)?;
        }
        let head = &h.levels[k][3];
        let residual = ex.conv2d(t, head.w, head.b, 1, 1)?;
        flow = ex.add(upflow, residual)?;
        if k > 0 {
            let up = ex.upsample2x(flow)?;
            upflow = ex.scale(up, 2.0)?;
        }
    }
    Ok(flow)
}

/// Estimate dense motion from `reference` to `current` (forward pass only).
pub fn estimate_flow(
    current: &Frame,
    reference: &Frame,
    params: &FlowNetParams,
) -> Result<FlowField> {
    if current.array().shape() != reference.array().shape() {
        return Err(Error::shape(
            "estimate_flow frames",
            current.array().shape(),
            reference.array().shape(),
        ));
    }
    let div = 1usize << (params.level_count() - 1);
    if current.height() % div != 0 || current.width() % div != 0 {
        return Err(Error::Indivisible {
            context: "estimate_flow frame extents",
            got: vec![current.height(), current.width()],
            divisor: div,
        });
    }
    if current.channels() != params.channels() {
        return Err(Error::shape(
            "estimate_flow channels",
            &[params.channels()],
            &[current.channels()],
        ));
    }
    let mut ex = Eager::new();
    let cur = ex.constant(current.array().clone());
    let rf = ex.constant(reference.array().clone());
    let handles = params.bind(&mut ex, |e, a| e.constant(a.clone()));
    let flow = flow_net(&mut ex, &handles, cur, rf)?;
    FlowField::from_array(ex.take(flow))
}
