//! Quality metrics and the Bjontegaard delta-rate.

use crate::error::{Error, Result};
use crate::motion::Frame;

/// PSNR in dB for [0,1]-range frames, capped at 99 dB for MSE below 1e-10.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    let mse = a.mse(b)?;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse < 1e-10 {
        99.0
    } else {
        -10.0 * mse.log10()
    }
}

/// One operating point: rate in bits per pixel, quality in dB.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RdPoint {
    pub bpp: f64,
    pub psnr: f64,
}

/// Measured rate-distortion curve, sorted by rate.
#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn new(mut points: Vec<RdPoint>) -> Result<RdCurve> {
        if points.iter().any(|p| !(p.bpp > 0.0) || !p.psnr.is_finite()) {
            return Err(Error::Invalid(
                "RD curve requires positive rates and finite PSNR".into(),
            ));
        }
        points.sort_by(|a, b| a.bpp.partial_cmp(&b.bpp).expect("finite rates"));
        Ok(RdCurve { points })
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }
}

/// Least-squares cubic fit of log10(rate) as a function of PSNR.
fn fit_log_rate_cubic(curve: &RdCurve) -> Result<[f64; 4]> {
    let n = curve.points.len();
    if n < 4 {
        return Err(Error::Invalid(format!(
            "BD-rate needs at least 4 points per curve, got {n}"
        )));
    }
    // normal equations for the Vandermonde system
    let mut ata = [[0.0f64; 4]; 4];
    let mut atb = [0.0f64; 4];
    for p in &curve.points {
        let x = p.psnr;
        let y = p.bpp.log10();
        let powers = [1.0, x, x * x, x * x * x];
        for i in 0..4 {
            for j in 0..4 {
                ata[i][j] += powers[i] * powers[j];
            }
            atb[i] += powers[i] * y;
        }
    }
    solve4(ata, atb)
}

/// Gaussian elimination with partial pivoting on a 4x4 system.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Result<[f64; 4]> {
    for col in 0..4 {
        let mut piv = col;
        for r in col + 1..4 {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-12 {
            return Err(Error::Invalid(
                "degenerate RD curve: polynomial fit is singular".into(),
            ));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..4 {
            let f = a[r][col] / a[col][col];
            for c in col..4 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 4];
    for r in (0..4).rev() {
        let mut acc = b[r];
        for c in r + 1..4 {
            acc -= a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    Ok(x)
}

fn poly_integral(c: &[f64; 4], lo: f64, hi: f64) -> f64 {
    let eval = |x: f64| {
        let x2 = x * x;
        c[0] * x + c[1] * x2 / 2.0 + c[2] * x2 * x / 3.0 + c[3] * x2 * x2 / 4.0
    };
    eval(hi) - eval(lo)
}

fn psnr_range(c: &RdCurve) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in c.points() {
        lo = lo.min(p.psnr);
        hi = hi.max(p.psnr);
    }
    (lo, hi)
}

/// Bjontegaard delta-rate in percent: average log-rate gap between cubic
/// fits over the overlapping PSNR interval. Negative means the test curve
/// saves bits against the anchor.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let ca = fit_log_rate_cubic(anchor)?;
    let ct = fit_log_rate_cubic(test)?;
    let (alo, ahi) = psnr_range(anchor);
    let (tlo, thi) = psnr_range(test);
    let lo = alo.max(tlo);
    let hi = ahi.min(thi);
    if !(hi > lo) {
        return Err(Error::Invalid(format!(
            "no PSNR overlap between curves ([{alo:.3},{ahi:.3}] vs [{tlo:.3},{thi:.3}])"
        )));
    }
    let avg_diff = (poly_integral(&ct, lo, hi) - poly_integral(&ca, lo, hi)) / (hi - lo);
    Ok((10.0f64.powf(avg_diff) - 1.0) * 100.0)
}
