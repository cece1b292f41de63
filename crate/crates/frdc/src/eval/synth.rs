//! Synthetic labelled video: the stand-in oracle for block-MV extraction.
//!
//! A smoothed random master texture is resampled at per-frame cumulative
//! offsets, so programmed motions are exact by construction. Labels store
//! the programmed motion quantized to 1/16-pel integers; ground-truth flow
//! fields carry the same values in pixel units.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grad::Array;
use crate::motion::{FlowField, Frame, MvLabelGrid};

/// Label-grid sampling stride (quarter resolution).
pub const LABEL_STRIDE: usize = 4;
/// Fractional-pel precision denominator of stored labels.
pub const LABEL_PRECISION: usize = 16;

/// Per-frame motion program. Translations are snapped to 1/16-pel.
#[derive(Clone, Debug)]
pub enum MotionProgram {
    /// One translation per coded frame (cycled if shorter than the video).
    Global(Vec<(f64, f64)>),
    /// Two vertical bands moving independently; the split must align with
    /// the label grid.
    TwoRegion {
        split_x: usize,
        left: Vec<(f64, f64)>,
        right: Vec<(f64, f64)>,
    },
}

#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub frames: usize,
    pub motion: MotionProgram,
}

fn snap_sixteenth(v: f64) -> f64 {
    (v * LABEL_PRECISION as f64).round() / LABEL_PRECISION as f64
}

fn motion_at(program: &[(f64, f64)], t: usize) -> (f64, f64) {
    if program.is_empty() {
        (0.0, 0.0)
    } else {
        let (x, y) = program[(t - 1) % program.len()];
        (snap_sixteenth(x), snap_sixteenth(y))
    }
}

/// Smoothed random texture in [0.05, 0.95], one plane per channel.
fn master_texture(c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Array {
    let mut t = Array::from_fn(&[c, h, w], |_| rng.gen_range(0.0..1.0));
    for _ in 0..2 {
        let mut s = Array::zeros(&[c, h, w]);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    let mut cnt = 0.0;
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let yy = y as i64 + dy;
                            let xx = x as i64 + dx;
                            if yy >= 0 && yy < h as i64 && xx >= 0 && xx < w as i64 {
                                acc += t.get3(ch, yy as usize, xx as usize);
                                cnt += 1.0;
                            }
                        }
                    }
                    s.set3(ch, y, x, acc / cnt);
                }
            }
        }
        t = s;
    }
    // stretch contrast deterministically
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in t.data() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = (hi - lo).max(1e-9);
    t.map(|v| 0.05 + 0.9 * (v - lo) / span)
}

fn bilinear(master: &Array, ch: usize, y: f64, x: f64) -> f64 {
    let (h, w) = (master.shape()[1], master.shape()[2]);
    let xc = x.clamp(0.0, (w - 1) as f64);
    let yc = y.clamp(0.0, (h - 1) as f64);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let wx = xc - x0 as f64;
    let wy = yc - y0 as f64;
    let top = (1.0 - wx) * master.get3(ch, y0, x0) + wx * master.get3(ch, y0, x1);
    let bot = (1.0 - wx) * master.get3(ch, y1, x0) + wx * master.get3(ch, y1, x1);
    (1.0 - wy) * top + wy * bot
}

/// Render the sequence plus exact per-frame labels and ground-truth flows.
/// Frame t's label maps frame t onto frame t-1 (warp convention), so the
/// outputs have `frames - 1` label grids and flow fields.
pub fn gen_synthetic(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<(Vec<Frame>, Vec<MvLabelGrid>, Vec<FlowField>)> {
    if spec.frames == 0 || spec.width == 0 || spec.height == 0 || spec.channels == 0 {
        return Err(Error::Invalid("degenerate synthetic spec".into()));
    }
    if let MotionProgram::TwoRegion { split_x, .. } = &spec.motion {
        if split_x % LABEL_STRIDE != 0 || *split_x == 0 || *split_x >= spec.width {
            return Err(Error::Invalid(format!(
                "region split {split_x} must be a positive multiple of {LABEL_STRIDE} inside the frame"
            )));
        }
    }

    // cumulative offsets per region
    let mut off_left = vec![(0.0f64, 0.0f64)];
    let mut off_right = vec![(0.0f64, 0.0f64)];
    let mut max_abs = 0.0f64;
    for t in 1..spec.frames {
        let (vl, vr) = match &spec.motion {
            MotionProgram::Global(p) => (motion_at(p, t), motion_at(p, t)),
            MotionProgram::TwoRegion { left, right, .. } => (motion_at(left, t), motion_at(right, t)),
        };
        let prev_l = *off_left.last().expect("seeded");
        let prev_r = *off_right.last().expect("seeded");
        off_left.push((prev_l.0 + vl.0, prev_l.1 + vl.1));
        off_right.push((prev_r.0 + vr.0, prev_r.1 + vr.1));
        for v in [off_left.last().unwrap(), off_right.last().unwrap()] {
            max_abs = max_abs.max(v.0.abs()).max(v.1.abs());
        }
    }
    let margin = max_abs.ceil() as usize + 2;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let master = master_texture(
        spec.channels,
        spec.height + 2 * margin,
        spec.width + 2 * margin,
        &mut rng,
    );

    let split = match &spec.motion {
        MotionProgram::TwoRegion { split_x, .. } => *split_x,
        MotionProgram::Global(_) => spec.width,
    };

    let mut frames = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let mut data = Array::zeros(&[spec.channels, spec.height, spec.width]);
        for ch in 0..spec.channels {
            for y in 0..spec.height {
                for x in 0..spec.width {
                    let (ox, oy) = if x < split { off_left[t] } else { off_right[t] };
                    let v = bilinear(
                        &master,
                        ch,
                        y as f64 + margin as f64 + oy,
                        x as f64 + margin as f64 + ox,
                    );
                    data.set3(ch, y, x, v);
                }
            }
        }
        frames.push(Frame::from_array(data)?);
    }

    let mut labels = Vec::with_capacity(spec.frames - 1);
    let mut flows = Vec::with_capacity(spec.frames - 1);
    let gw = spec.width.div_ceil(LABEL_STRIDE);
    let gh = spec.height.div_ceil(LABEL_STRIDE);
    for t in 1..spec.frames {
        let (vl, vr) = match &spec.motion {
            MotionProgram::Global(p) => (motion_at(p, t), motion_at(p, t)),
            MotionProgram::TwoRegion { left, right, .. } => (motion_at(left, t), motion_at(right, t)),
        };
        let mut cells = Vec::with_capacity(gw * gh);
        for _gy in 0..gh {
            for gx in 0..gw {
                let v = if gx * LABEL_STRIDE < split { vl } else { vr };
                cells.push((
                    (v.0 * LABEL_PRECISION as f64).round() as i16,
                    (v.1 * LABEL_PRECISION as f64).round() as i16,
                ));
            }
        }
        labels.push(MvLabelGrid::new(
            spec.width,
            spec.height,
            LABEL_STRIDE,
            LABEL_PRECISION,
            "synthetic-oracle low-delay qp22 prof-off ciip-off".into(),
            cells,
        )?);

        let mut f = Array::zeros(&[2, spec.height, spec.width]);
        for y in 0..spec.height {
            for x in 0..spec.width {
                let v = if x < split { vl } else { vr };
                f.set3(0, y, x, v.0);
                f.set3(1, y, x, v.1);
            }
        }
        flows.push(FlowField::from_array(f)?);
    }
    Ok((frames, labels, flows))
}
