//! Flow-field visualization: angle to hue, magnitude to saturation,
//! written as a binary portable pixmap (P6).

use std::path::Path;

use crate::error::Result;
use crate::motion::FlowField;

/// Nearest-rank 99th percentile of the magnitudes (normalization scale).
pub(crate) fn percentile99(mags: &[f64]) -> f64 {
    let mut sorted = mags.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite magnitudes"));
    let n = sorted.len();
    let rank = ((0.99 * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let i = h.floor() as i32 % 6;
    let f = h - h.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    let (r, g, b) = match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8,
    ]
}

/// Render the flow as P6 pixmap bytes. Zero motion maps to white.
pub fn flow_to_ppm(flow: &FlowField) -> Vec<u8> {
    let (h, w) = (flow.height(), flow.width());
    let mags: Vec<f64> = (0..h * w)
        .map(|p| {
            let (vi, vj) = flow.at(p / w, p % w);
            (vi * vi + vj * vj).sqrt()
        })
        .collect();
    let scale = percentile99(&mags);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            let (vi, vj) = flow.at(y, x);
            let mag = mags[y * w + x];
            let sat = if scale > 1e-12 {
                (mag / scale).min(1.0)
            } else {
                0.0
            };
            let hue = vj.atan2(vi).to_degrees();
            out.extend_from_slice(&hsv_to_rgb(hue, sat, 1.0));
        }
    }
    out
}

/// Write the visualization to a file.
pub fn dump_flow_visualization(flow: &FlowField, path: &Path) -> Result<()> {
    std::fs::write(path, flow_to_ppm(flow))?;
    Ok(())
}
