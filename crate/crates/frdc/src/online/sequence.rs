//! GOP orchestration: sequence encoding with real entropy coding, and the
//! matching decoder. The decoder is a pure function of bitstream plus
//! checkpoint; it runs no optimizer iterations and builds no gradient
//! tapes.

use crate::bitstream::{
    build_cdfs, range_decode, range_encode, CdfTable, Container, FrameRecord, ALPHABET_MAX,
    ALPHABET_MIN,
};
use crate::codec::{
    context_at_latent_res, context_extractor, frame_decoder, hyper_decoder, mv_decoder,
    CheckpointData, CodecParams, C_G, C_Y, C_Z,
};
use crate::error::{Error, Result};
use crate::eval::psnr_from_mse;
use crate::grad::ops::CdfModel;
use crate::grad::{Array, Eager, Executor};
use crate::io::frame_to_bytes;
use crate::motion::Frame;

use super::optimize::{
    optimize_core, require_codec, window_schedule, OptConfig, OptOutcome, WindowConfig,
};

/// Encoder-side optimization mode.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum OptMode {
    /// Plain forward-pass coding (no latent updates).
    None,
    /// Per-frame latent descent.
    Single,
    /// Sliding-window latent descent.
    Window,
}

/// GOP structure for one encode.
#[derive(Clone, Debug)]
pub struct GopConfig {
    pub intra_period: usize,
    pub lambda: f64,
    /// Number of frames to code (clamped to the input length).
    pub frames: usize,
}

/// Per-frame encoder log record.
#[derive(Clone, Debug)]
pub struct FrameStats {
    pub index: usize,
    pub is_intra: bool,
    pub bits_y_est: f64,
    pub bits_z_est: f64,
    pub bits_g_est: f64,
    /// Emitted payload size in bits (exactly 8x the payload bytes).
    pub actual_bits: u64,
    pub mse: f64,
    pub psnr: f64,
    pub iterations: usize,
    pub best_iteration: usize,
}

impl FrameStats {
    /// Documented log-line field order.
    pub fn log_line(&self) -> String {
        format!(
            "frame {} {} bits_y {:.2} bits_z {:.2} bits_g {:.2} total_bits {} mse {:.8} psnr {:.4} iters {} best {}",
            self.index,
            if self.is_intra { "I" } else { "P" },
            self.bits_y_est,
            self.bits_z_est,
            self.bits_g_est,
            self.actual_bits,
            self.mse,
            self.psnr,
            self.iterations,
            self.best_iteration,
        )
    }
}

pub struct EncodedSequence {
    pub container: Container,
    pub stats: Vec<FrameStats>,
    pub reconstructions: Vec<Frame>,
}

/// Per-channel factorized tables for the hyperprior latent.
fn z_tables(codec: &CodecParams) -> Vec<CdfTable> {
    build_cdfs(
        CdfModel::Logistic,
        codec.z_loc.data(),
        codec.z_scale_raw.data(),
        ALPHABET_MIN,
        ALPHABET_MAX,
    )
}

/// Expand per-channel tables to one reference per element of a `[c,h,w]`
/// latent (row-major: all of channel 0 first).
fn per_element<'t>(tables: &'t [CdfTable], shape: &[usize]) -> Vec<&'t CdfTable> {
    let plane = shape[1] * shape[2];
    let mut out = Vec::with_capacity(shape[0] * plane);
    for t in tables.iter().take(shape[0]) {
        for _ in 0..plane {
            out.push(t);
        }
    }
    out
}

fn symbols_of(latent: &Array) -> Vec<i32> {
    latent.data().iter().map(|&v| v as i32).collect()
}

fn latent_from_symbols(shape: &[usize], symbols: &[i32]) -> Result<Array> {
    Array::from_vec(shape, symbols.iter().map(|&s| s as f64).collect())
}

/// Gaussian tables for y from the hyper decoder on the quantized z.
fn y_tables(codec: &CodecParams, z_hat: &Array) -> Result<Vec<CdfTable>> {
    let mut ex = Eager::new();
    let h = codec.bind(&mut ex, |e, a| e.constant(a.clone()));
    let z = ex.constant(z_hat.clone());
    let (loc, raw) = hyper_decoder(&mut ex, &h, z)?;
    Ok(build_cdfs(
        CdfModel::Gaussian,
        ex.value(loc).data(),
        ex.value(raw).data(),
        ALPHABET_MIN,
        ALPHABET_MAX,
    ))
}

/// Gaussian tables for g from the temporal prior, plus the decoded flow and
/// pooled context needed to finish reconstruction. Shared verbatim by
/// encoder and decoder so their tables are identical.
struct GContext {
    tables: Vec<CdfTable>,
    ctx8: Array,
}

fn g_context(codec: &CodecParams, reference: &Frame, y_hat: &Array) -> Result<GContext> {
    let mut ex = Eager::new();
    let h = codec.bind(&mut ex, |e, a| e.constant(a.clone()));
    let y = ex.constant(y_hat.clone());
    let rf = ex.constant(reference.array().clone());
    let flow = mv_decoder(&mut ex, &h, y)?;
    let ctx = context_extractor(&mut ex, &h, rf, flow)?;
    let ctx8 = context_at_latent_res(&mut ex, ctx)?;
    let (loc, raw) = temporal_prior_arrays(&mut ex, &h, ctx8)?;
    Ok(GContext {
        tables: build_cdfs(
            CdfModel::Gaussian,
            loc.data(),
            raw.data(),
            ALPHABET_MIN,
            ALPHABET_MAX,
        ),
        ctx8: ex.take(ctx8),
    })
}

fn temporal_prior_arrays(
    ex: &mut Eager,
    h: &crate::codec::CodecH,
    ctx8: crate::grad::TensorId,
) -> Result<(Array, Array)> {
    let (loc, raw) = crate::codec::temporal_prior(ex, h, ctx8)?;
    Ok((ex.value(loc).clone(), ex.value(raw).clone()))
}

/// Code a whole sequence: intra frames at the intra period (stored as raw
/// 8-bit planes), inter frames through the selected optimization mode and
/// real range coding. The decoder of the emitted container reproduces the
/// returned reconstructions bit-exactly.
pub fn encode_sequence(
    video: &[Frame],
    ckpt: &CheckpointData,
    gop: &GopConfig,
    mode: OptMode,
    cfg: &OptConfig,
    wcfg: &WindowConfig,
) -> Result<EncodedSequence> {
    let codec = require_codec(ckpt, gop.lambda)?;
    if gop.intra_period == 0 {
        return Err(Error::Invalid("intra period must be >= 1".into()));
    }
    if mode == OptMode::Window {
        wcfg.validate()?;
    }
    let n = gop.frames.min(video.len());
    if n == 0 {
        return Err(Error::Invalid("no frames to encode".into()));
    }
    let first = &video[0];
    let (c, h, w) = (first.channels(), first.height(), first.width());
    if h % 32 != 0 || w % 32 != 0 {
        return Err(Error::Indivisible {
            context: "encode_sequence frame extents",
            got: vec![h, w],
            divisor: 32,
        });
    }
    if c != codec.frame_channels {
        return Err(Error::shape(
            "encode_sequence channels vs checkpoint",
            &[codec.frame_channels],
            &[c],
        ));
    }

    let ztabs = z_tables(codec);
    let mut records = Vec::with_capacity(n);
    let mut stats = Vec::with_capacity(n);
    let mut recons: Vec<Frame> = Vec::with_capacity(n);
    let mut reference: Option<Frame> = None;

    for i in 0..n {
        let frame = &video[i];
        let pos = i % gop.intra_period;
        if pos == 0 {
            let planes = frame_to_bytes(frame);
            let recon = crate::io::frame_from_bytes(c, h, w, &planes)?;
            let mse = frame.mse(&recon)?;
            let record = FrameRecord::Intra { planes };
            stats.push(FrameStats {
                index: i,
                is_intra: true,
                bits_y_est: 0.0,
                bits_z_est: 0.0,
                bits_g_est: 0.0,
                actual_bits: record.payload_bits(),
                mse,
                psnr: psnr_from_mse(mse),
                iterations: 0,
                best_iteration: 0,
            });
            records.push(record);
            reference = Some(recon.clone());
            recons.push(recon);
            continue;
        }

        let refframe = reference.as_ref().expect("intra precedes inter").clone();
        let frame_seed = cfg.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let frame_cfg = OptConfig {
            seed: frame_seed,
            ..cfg.clone()
        };
        let outcome: OptOutcome = match mode {
            OptMode::None => {
                let plain = OptConfig {
                    iters: 0,
                    ..frame_cfg.clone()
                };
                optimize_core(
                    std::slice::from_ref(frame),
                    &refframe,
                    &ckpt.flow,
                    codec,
                    gop.lambda,
                    &[1.0],
                    &plain,
                )?
            }
            OptMode::Single => optimize_core(
                std::slice::from_ref(frame),
                &refframe,
                &ckpt.flow,
                codec,
                gop.lambda,
                &[1.0],
                &frame_cfg,
            )?,
            OptMode::Window => {
                let in_gop = window_schedule(gop.intra_period, pos, wcfg.window);
                let avail = (n - i).min(in_gop - 1).max(1);
                let frames = &video[i..i + avail];
                optimize_core(
                    frames,
                    &refframe,
                    &ckpt.flow,
                    codec,
                    gop.lambda,
                    &wcfg.weights[..avail],
                    &frame_cfg,
                )?
            }
        };

        // entropy-code the kept latents; tables are decoder-reproducible
        let z_syms = symbols_of(&outcome.latents.z);
        let z_bytes = range_encode(&z_syms, &per_element(&ztabs, outcome.latents.z.shape()))?;
        let ytabs = y_tables(codec, &outcome.latents.z)?;
        let y_syms = symbols_of(&outcome.latents.y);
        let y_refs: Vec<&CdfTable> = ytabs.iter().collect();
        let y_bytes = range_encode(&y_syms, &y_refs)?;
        let gctx = g_context(codec, &refframe, &outcome.latents.y)?;
        let g_syms = symbols_of(&outcome.g.g);
        let g_refs: Vec<&CdfTable> = gctx.tables.iter().collect();
        let g_bytes = range_encode(&g_syms, &g_refs)?;

        let record = FrameRecord::Inter {
            z: z_bytes,
            y: y_bytes,
            g: g_bytes,
        };
        stats.push(FrameStats {
            index: i,
            is_intra: false,
            bits_y_est: outcome.breakdown.bits_y,
            bits_z_est: outcome.breakdown.bits_z,
            bits_g_est: outcome.breakdown.bits_g,
            actual_bits: record.payload_bits(),
            mse: outcome.breakdown.distortion,
            psnr: psnr_from_mse(outcome.breakdown.distortion),
            iterations: outcome.stats.iterations_run,
            best_iteration: outcome.stats.best_iteration,
        });
        records.push(record);
        reference = Some(outcome.recon.clone());
        recons.push(outcome.recon);
    }

    Ok(EncodedSequence {
        container: Container {
            width: w as u32,
            height: h as u32,
            channels: c as u16,
            intra_period: gop.intra_period as u32,
            lambda: gop.lambda,
            checkpoint_digest: ckpt.digest,
            frames: records,
        },
        stats,
        reconstructions: recons,
    })
}

/// Decode a container back to reconstructions. Pure function of bitstream
/// and checkpoint: rejects a checkpoint whose digest does not match, runs
/// zero optimizer iterations, and never constructs a gradient tape.
pub fn decode_sequence(container: &Container, ckpt: &CheckpointData) -> Result<Vec<Frame>> {
    if container.checkpoint_digest != ckpt.digest {
        return Err(Error::DigestMismatch);
    }
    let codec = require_codec(ckpt, container.lambda)?;
    let (c, h, w) = (
        container.channels as usize,
        container.height as usize,
        container.width as usize,
    );
    let (h8, w8) = (h / 8, w / 8);
    let (h32, w32) = (h / 32, w / 32);
    let ztabs = z_tables(codec);

    let mut out: Vec<Frame> = Vec::with_capacity(container.frames.len());
    let mut reference: Option<Frame> = None;
    for record in &container.frames {
        match record {
            FrameRecord::Intra { planes } => {
                let recon = crate::io::frame_from_bytes(c, h, w, planes)?;
                reference = Some(recon.clone());
                out.push(recon);
            }
            FrameRecord::Inter { z, y, g } => {
                let refframe = reference
                    .as_ref()
                    .ok_or_else(|| Error::CorruptFile {
                        what: "FRDC container",
                        detail: "inter frame before any intra frame".into(),
                    })?
                    .clone();
                let z_shape = [C_Z, h32, w32];
                let z_syms = range_decode(z, &per_element(&ztabs, &z_shape), C_Z * h32 * w32)?;
                let z_hat = latent_from_symbols(&z_shape, &z_syms)?;
                let ytabs = y_tables(codec, &z_hat)?;
                let y_refs: Vec<&CdfTable> = ytabs.iter().collect();
                let y_syms = range_decode(y, &y_refs, C_Y * h8 * w8)?;
                let y_hat = latent_from_symbols(&[C_Y, h8, w8], &y_syms)?;
                let gctx = g_context(codec, &refframe, &y_hat)?;
                let g_refs: Vec<&CdfTable> = gctx.tables.iter().collect();
                let g_syms = range_decode(g, &g_refs, C_G * h8 * w8)?;
                let g_hat = latent_from_symbols(&[C_G, h8, w8], &g_syms)?;

                let mut ex = Eager::new();
                let hh = codec.bind(&mut ex, |e, a| e.constant(a.clone()));
                let g_id = ex.constant(g_hat);
                let ctx8 = ex.constant(gctx.ctx8);
                let recon = frame_decoder(&mut ex, &hh, g_id, ctx8)?;
                let recon = Frame::from_array(ex.take(recon))?;
                reference = Some(recon.clone());
                out.push(recon);
            }
        }
    }
    Ok(out)
}
