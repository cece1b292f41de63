//! Codec parameter container: motion autoencoder with hyperprior, context
//! extractor, contextual coder, temporal-prior parameter network, and the
//! factorized model for the hyperprior latent.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detmath;
use crate::error::{Error, Result};
use crate::grad::{ops::SCALE_MIN, Array, Executor, TensorId};
use crate::nn::{ConvLayer, LayerH, ParamSet};

/// Motion-latent channels (grid at 1/8 resolution).
pub const C_Y: usize = 32;
/// Hyperprior channels (grid at 1/32 resolution).
pub const C_Z: usize = 16;
/// Contextual-frame latent channels (grid at 1/8 resolution).
pub const C_G: usize = 48;
/// Context feature channels at full resolution.
pub const C_CTX: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct CodecParams {
    pub frame_channels: usize,
    pub mv_enc: [ConvLayer; 3],
    pub hyper_enc: [ConvLayer; 2],
    pub hyper_dec_mid: ConvLayer,
    pub hyper_dec_loc: ConvLayer,
    pub hyper_dec_scale: ConvLayer,
    pub mv_dec: [ConvLayer; 3],
    pub ctx_feat: ConvLayer,
    pub ctx_refine: ConvLayer,
    pub frame_enc: [ConvLayer; 3],
    pub frame_dec: [ConvLayer; 3],
    pub recon_head: ConvLayer,
    pub tprior_mid: ConvLayer,
    pub tprior_loc: ConvLayer,
    pub tprior_scale: ConvLayer,
    pub z_loc: Array,
    pub z_scale_raw: Array,
}

impl CodecParams {
    pub fn init(frame_channels: usize, seed: u64) -> CodecParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = frame_channels;
        CodecParams {
            frame_channels: c,
            mv_enc: [
                ConvLayer::conv(16, 2, 5, &mut rng),
                ConvLayer::conv(24, 16, 5, &mut rng),
                ConvLayer::conv(C_Y, 24, 5, &mut rng),
            ],
            hyper_enc: [
                ConvLayer::conv(16, C_Y, 5, &mut rng),
                ConvLayer::conv(C_Z, 16, 5, &mut rng),
            ],
            hyper_dec_mid: ConvLayer::deconv(C_Z, 24, &mut rng),
            hyper_dec_loc: ConvLayer::deconv(24, C_Y, &mut rng),
            hyper_dec_scale: ConvLayer::deconv(24, C_Y, &mut rng),
            mv_dec: [
                ConvLayer::deconv(C_Y, 24, &mut rng),
                ConvLayer::deconv(24, 16, &mut rng),
                ConvLayer::deconv(16, 2, &mut rng),
            ],
            ctx_feat: ConvLayer::conv(8, c, 3, &mut rng),
            ctx_refine: ConvLayer::conv(C_CTX, 8, 3, &mut rng),
            frame_enc: [
                ConvLayer::conv(8, c + C_CTX, 5, &mut rng),
                ConvLayer::conv(16, 8, 5, &mut rng),
                ConvLayer::conv(C_G, 16, 5, &mut rng),
            ],
            frame_dec: [
                ConvLayer::deconv(C_G + C_CTX, 32, &mut rng),
                ConvLayer::deconv(32, 16, &mut rng),
                ConvLayer::deconv(16, 8, &mut rng),
            ],
            recon_head: ConvLayer::conv(c, 8, 3, &mut rng),
            tprior_mid: ConvLayer::conv(32, C_CTX, 3, &mut rng),
            tprior_loc: ConvLayer::conv(C_G, 32, 3, &mut rng),
            tprior_scale: ConvLayer::conv(C_G, 32, 3, &mut rng),
            z_loc: Array::zeros(&[C_Z]),
            // start the factorized model wide so early latents stay codable
            z_scale_raw: Array::full(&[C_Z], detmath::softplus_inverse(2.0 - SCALE_MIN)),
        }
    }

    fn layers(&self) -> Vec<(String, &ConvLayer)> {
        let mut v: Vec<(String, &ConvLayer)> = Vec::new();
        for (i, l) in self.mv_enc.iter().enumerate() {
            v.push((format!("codec.mv_enc{i}"), l));
        }
        for (i, l) in self.hyper_enc.iter().enumerate() {
            v.push((format!("codec.hyper_enc{i}"), l));
        }
        v.push(("codec.hyper_dec_mid".into(), &self.hyper_dec_mid));
        v.push(("codec.hyper_dec_loc".into(), &self.hyper_dec_loc));
        v.push(("codec.hyper_dec_scale".into(), &self.hyper_dec_scale));
        for (i, l) in self.mv_dec.iter().enumerate() {
            v.push((format!("codec.mv_dec{i}"), l));
        }
        v.push(("codec.ctx_feat".into(), &self.ctx_feat));
        v.push(("codec.ctx_refine".into(), &self.ctx_refine));
        for (i, l) in self.frame_enc.iter().enumerate() {
            v.push((format!("codec.frame_enc{i}"), l));
        }
        for (i, l) in self.frame_dec.iter().enumerate() {
            v.push((format!("codec.frame_dec{i}"), l));
        }
        v.push(("codec.recon_head".into(), &self.recon_head));
        v.push(("codec.tprior_mid".into(), &self.tprior_mid));
        v.push(("codec.tprior_loc".into(), &self.tprior_loc));
        v.push(("codec.tprior_scale".into(), &self.tprior_scale));
        v
    }

    fn layers_mut(&mut self) -> (Vec<(String, &mut ConvLayer)>, &mut Array, &mut Array) {
        let CodecParams {
            frame_channels: _,
            mv_enc,
            hyper_enc,
            hyper_dec_mid,
            hyper_dec_loc,
            hyper_dec_scale,
            mv_dec,
            ctx_feat,
            ctx_refine,
            frame_enc,
            frame_dec,
            recon_head,
            tprior_mid,
            tprior_loc,
            tprior_scale,
            z_loc,
            z_scale_raw,
        } = self;
        let mut v: Vec<(String, &mut ConvLayer)> = Vec::new();
        for (i, l) in mv_enc.iter_mut().enumerate() {
            v.push((format!("codec.mv_enc{i}"), l));
        }
        for (i, l) in hyper_enc.iter_mut().enumerate() {
            v.push((format!("codec.hyper_enc{i}"), l));
        }
        v.push(("codec.hyper_dec_mid".into(), hyper_dec_mid));
        v.push(("codec.hyper_dec_loc".into(), hyper_dec_loc));
        v.push(("codec.hyper_dec_scale".into(), hyper_dec_scale));
        for (i, l) in mv_dec.iter_mut().enumerate() {
            v.push((format!("codec.mv_dec{i}"), l));
        }
        v.push(("codec.ctx_feat".into(), ctx_feat));
        v.push(("codec.ctx_refine".into(), ctx_refine));
        for (i, l) in frame_enc.iter_mut().enumerate() {
            v.push((format!("codec.frame_enc{i}"), l));
        }
        for (i, l) in frame_dec.iter_mut().enumerate() {
            v.push((format!("codec.frame_dec{i}"), l));
        }
        v.push(("codec.recon_head".into(), recon_head));
        v.push(("codec.tprior_mid".into(), tprior_mid));
        v.push(("codec.tprior_loc".into(), tprior_loc));
        v.push(("codec.tprior_scale".into(), tprior_scale));
        (v, z_loc, z_scale_raw)
    }

    /// Upload into an executor; traversal order matches `entries()`.
    pub fn bind<E: Executor>(
        &self,
        ex: &mut E,
        mut add: impl FnMut(&mut E, &Array) -> TensorId,
    ) -> CodecH {
        let layer = |ex: &mut E, l: &ConvLayer, add: &mut dyn FnMut(&mut E, &Array) -> TensorId| LayerH {
            w: add(ex, &l.weight),
            b: add(ex, &l.bias),
        };
        CodecH {
            mv_enc: [
                layer(ex, &self.mv_enc[0], &mut add),
                layer(ex, &self.mv_enc[1], &mut add),
                layer(ex, &self.mv_enc[2], &mut add),
            ],
            hyper_enc: [
                layer(ex, &self.hyper_enc[0], &mut add),
                layer(ex, &self.hyper_enc[1], &mut add),
            ],
            hyper_dec_mid: layer(ex, &self.hyper_dec_mid, &mut add),
            hyper_dec_loc: layer(ex, &self.hyper_dec_loc, &mut add),
            hyper_dec_scale: layer(ex, &self.hyper_dec_scale, &mut add),
            mv_dec: [
                layer(ex, &self.mv_dec[0], &mut add),
                layer(ex, &self.mv_dec[1], &mut add),
                layer(ex, &self.mv_dec[2], &mut add),
            ],
            ctx_feat: layer(ex, &self.ctx_feat, &mut add),
            ctx_refine: layer(ex, &self.ctx_refine, &mut add),
            frame_enc: [
                layer(ex, &self.frame_enc[0], &mut add),
                layer(ex, &self.frame_enc[1], &mut add),
                layer(ex, &self.frame_enc[2], &mut add),
            ],
            frame_dec: [
                layer(ex, &self.frame_dec[0], &mut add),
                layer(ex, &self.frame_dec[1], &mut add),
                layer(ex, &self.frame_dec[2], &mut add),
            ],
            recon_head: layer(ex, &self.recon_head, &mut add),
            tprior_mid: layer(ex, &self.tprior_mid, &mut add),
            tprior_loc: layer(ex, &self.tprior_loc, &mut add),
            tprior_scale: layer(ex, &self.tprior_scale, &mut add),
            z_loc: add(ex, &self.z_loc),
            z_scale_raw: add(ex, &self.z_scale_raw),
        }
    }

    /// Rebuild from checkpoint entries.
    pub fn from_entries(map: &BTreeMap<String, Array>) -> Result<CodecParams> {
        let get = |name: &str| -> Result<Array> {
            map.get(name).cloned().ok_or_else(|| Error::CorruptFile {
                what: "checkpoint",
                detail: format!("missing entry {name}"),
            })
        };
        let layer = |name: &str| -> Result<ConvLayer> {
            Ok(ConvLayer {
                weight: get(&format!("{name}.weight"))?,
                bias: get(&format!("{name}.bias"))?,
            })
        };
        let ctx_feat = layer("codec.ctx_feat")?;
        let frame_channels = ctx_feat.weight.shape()[1];
        Ok(CodecParams {
            frame_channels,
            mv_enc: [
                layer("codec.mv_enc0")?,
                layer("codec.mv_enc1")?,
                layer("codec.mv_enc2")?,
            ],
            hyper_enc: [layer("codec.hyper_enc0")?, layer("codec.hyper_enc1")?],
            hyper_dec_mid: layer("codec.hyper_dec_mid")?,
            hyper_dec_loc: layer("codec.hyper_dec_loc")?,
            hyper_dec_scale: layer("codec.hyper_dec_scale")?,
            mv_dec: [
                layer("codec.mv_dec0")?,
                layer("codec.mv_dec1")?,
                layer("codec.mv_dec2")?,
            ],
            ctx_feat,
            ctx_refine: layer("codec.ctx_refine")?,
            frame_enc: [
                layer("codec.frame_enc0")?,
                layer("codec.frame_enc1")?,
                layer("codec.frame_enc2")?,
            ],
            frame_dec: [
                layer("codec.frame_dec0")?,
                layer("codec.frame_dec1")?,
                layer("codec.frame_dec2")?,
            ],
            recon_head: layer("codec.recon_head")?,
            tprior_mid: layer("codec.tprior_mid")?,
            tprior_loc: layer("codec.tprior_loc")?,
            tprior_scale: layer("codec.tprior_scale")?,
            z_loc: get("codec.z_loc")?,
            z_scale_raw: get("codec.z_scale_raw")?,
        })
    }
}

impl ParamSet for CodecParams {
    fn entries(&self) -> Vec<(String, &Array)> {
        let mut out = Vec::new();
        for (name, l) in self.layers() {
            out.push((format!("{name}.weight"), &l.weight));
            out.push((format!("{name}.bias"), &l.bias));
        }
        out.push(("codec.z_loc".into(), &self.z_loc));
        out.push(("codec.z_scale_raw".into(), &self.z_scale_raw));
        out
    }

    fn entries_mut(&mut self) -> Vec<(String, &mut Array)> {
        let (layers, z_loc, z_scale_raw) = self.layers_mut();
        let mut out: Vec<(String, &mut Array)> = Vec::new();
        for (name, l) in layers {
            let ConvLayer { weight, bias } = l;
            out.push((format!("{name}.weight"), weight));
            out.push((format!("{name}.bias"), bias));
        }
        out.push(("codec.z_loc".into(), z_loc));
        out.push(("codec.z_scale_raw".into(), z_scale_raw));
        out
    }
}

/// Executor-side handles for the codec.
pub struct CodecH {
    pub mv_enc: [LayerH; 3],
    pub hyper_enc: [LayerH; 2],
    pub hyper_dec_mid: LayerH,
    pub hyper_dec_loc: LayerH,
    pub hyper_dec_scale: LayerH,
    pub mv_dec: [LayerH; 3],
    pub ctx_feat: LayerH,
    pub ctx_refine: LayerH,
    pub frame_enc: [LayerH; 3],
    pub frame_dec: [LayerH; 3],
    pub recon_head: LayerH,
    pub tprior_mid: LayerH,
    pub tprior_loc: LayerH,
    pub tprior_scale: LayerH,
    pub z_loc: TensorId,
    pub z_scale_raw: TensorId,
}
