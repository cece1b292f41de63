//! Ablation sweeps over updating times N or window size W.
//!
//! Each cell encodes the given sequences at every lambda with a checkpoint
//! available, aggregates (bpp, PSNR) into one RD point per lambda, and
//! reports BD-rate against the sweep's anchor (N = 0 for the N sweep,
//! W = 2 for the W sweep). Wall-clock encode/decode times are reported but
//! never asserted.

use std::time::Instant;

use crate::codec::CheckpointData;
use crate::error::{Error, Result};
use crate::eval::metrics::{bd_rate, RdCurve, RdPoint};
use crate::motion::Frame;
use crate::online::{
    decode_sequence, encode_sequence, GopConfig, OptConfig, OptMode, WindowConfig,
};

/// Which axis the sweep varies.
#[derive(Clone, Debug)]
pub enum SweepAxis {
    /// Updating times N; anchor N = 0.
    UpdateIters(Vec<usize>),
    /// Window size W; anchor W = 2.
    WindowSize(Vec<usize>),
}

#[derive(Clone, Debug)]
pub struct AblationCell {
    pub axis_value: usize,
    pub lambda: f64,
    /// Missing checkpoint for this lambda.
    pub absent: bool,
    pub bpp: f64,
    pub psnr: f64,
    pub enc_seconds: f64,
    pub dec_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct AblationReport {
    pub cells: Vec<AblationCell>,
    /// (axis value, BD-rate vs anchor); None when a curve has < 4 points.
    pub bd_rates: Vec<(usize, Option<f64>)>,
    pub anchor_value: usize,
}

fn curve_for(cells: &[AblationCell], axis_value: usize) -> Option<RdCurve> {
    let pts: Vec<RdPoint> = cells
        .iter()
        .filter(|c| c.axis_value == axis_value && !c.absent)
        .map(|c| RdPoint {
            bpp: c.bpp,
            psnr: c.psnr,
        })
        .collect();
    if pts.len() < 4 {
        return None;
    }
    RdCurve::new(pts).ok()
}

/// Run the sweep. `lambdas` lists the requested rate points; a lambda with
/// no matching checkpoint is reported absent and the sweep continues.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    videos: &[Vec<Frame>],
    checkpoints: &[CheckpointData],
    lambdas: &[f64],
    axis: &SweepAxis,
    intra_period: usize,
    base_cfg: &OptConfig,
    base_wcfg: &WindowConfig,
    frames: usize,
) -> Result<AblationReport> {
    if videos.is_empty() {
        return Err(Error::Invalid("ablation needs at least one sequence".into()));
    }
    let (values, anchor_value) = match axis {
        SweepAxis::UpdateIters(v) => {
            let mut v = v.clone();
            if !v.contains(&0) {
                v.insert(0, 0);
            }
            (v, 0)
        }
        SweepAxis::WindowSize(v) => {
            let mut v = v.clone();
            if !v.contains(&2) {
                v.insert(0, 2);
            }
            (v, 2)
        }
    };

    let mut cells = Vec::new();
    for &value in &values {
        for &lambda in lambdas {
            let Some(ckpt) = checkpoints.iter().find(|c| c.lambda == Some(lambda)) else {
                cells.push(AblationCell {
                    axis_value: value,
                    lambda,
                    absent: true,
                    bpp: 0.0,
                    psnr: 0.0,
                    enc_seconds: 0.0,
                    dec_seconds: 0.0,
                });
                continue;
            };
            let (mode, cfg, wcfg) = match axis {
                SweepAxis::UpdateIters(_) => (
                    if value == 0 { OptMode::None } else { OptMode::Single },
                    OptConfig {
                        iters: value,
                        ..base_cfg.clone()
                    },
                    base_wcfg.clone(),
                ),
                SweepAxis::WindowSize(_) => (
                    if value == 2 { OptMode::Single } else { OptMode::Window },
                    base_cfg.clone(),
                    WindowConfig {
                        window: value,
                        ..base_wcfg.clone()
                    },
                ),
            };

            let mut total_bits = 0u64;
            let mut total_pixels = 0u64;
            let mut mse_acc = 0.0;
            let mut mse_n = 0usize;
            let mut enc_seconds = 0.0;
            let mut dec_seconds = 0.0;
            for video in videos {
                let gop = GopConfig {
                    intra_period,
                    lambda,
                    frames,
                };
                let t0 = Instant::now();
                let encoded = encode_sequence(video, ckpt, &gop, mode, &cfg, &wcfg)?;
                enc_seconds += t0.elapsed().as_secs_f64();
                let t1 = Instant::now();
                let decoded = decode_sequence(&encoded.container, ckpt)?;
                dec_seconds += t1.elapsed().as_secs_f64();
                debug_assert_eq!(decoded.len(), encoded.reconstructions.len());
                for (i, s) in encoded.stats.iter().enumerate() {
                    total_bits += s.actual_bits;
                    total_pixels += (video[i].height() * video[i].width()) as u64;
                    mse_acc += s.mse;
                    mse_n += 1;
                }
            }
            let mean_mse = mse_acc / mse_n.max(1) as f64;
            cells.push(AblationCell {
                axis_value: value,
                lambda,
                absent: false,
                bpp: total_bits as f64 / total_pixels.max(1) as f64,
                psnr: crate::eval::psnr_from_mse(mean_mse),
                enc_seconds,
                dec_seconds,
            });
        }
    }

    let anchor_curve = curve_for(&cells, anchor_value);
    let mut bd_rates = Vec::new();
    for &value in &values {
        let bd = match (&anchor_curve, curve_for(&cells, value)) {
            (Some(a), Some(t)) => bd_rate(a, &t).ok(),
            _ => None,
        };
        bd_rates.push((value, bd));
    }
    Ok(AblationReport {
        cells,
        bd_rates,
        anchor_value,
    })
}
