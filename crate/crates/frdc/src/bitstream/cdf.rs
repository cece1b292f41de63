//! Quantized cumulative-distribution tables for the range coder.
//!
//! Model CDF evaluations use the pinned software approximations in
//! `detmath`, so identical parameters produce identical tables on every
//! platform. Every symbol keeps a mass of at least 1/2^16, matching the
//! probability floor of the differentiable bit estimates.

use crate::detmath;
use crate::grad::ops::{CdfModel, SCALE_MIN};

/// Per-context cumulative distribution over the integer alphabet
/// `[min, min + n - 1]` at 16-bit precision: `cdf[0] = 0`,
/// `cdf[n] = 65536`, strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct CdfTable {
    min: i32,
    cdf: Vec<u32>,
}

pub(crate) const TOTAL: u32 = 1 << 16;

impl CdfTable {
    /// Quantize real interval masses to a valid 16-bit table. Non-positive
    /// or non-finite weight vectors fall back to uniform.
    pub fn from_masses(min: i32, masses: &[f64]) -> CdfTable {
        let n = masses.len();
        assert!(n >= 1 && n <= TOTAL as usize / 2, "alphabet size {n}");
        let weights: Vec<f64> = masses.iter().map(|&m| if m > 0.0 { m } else { 0.0 }).collect();
        let total_w: f64 = weights.iter().sum();
        let budget = (TOTAL - n as u32) as f64;
        let mut freqs: Vec<u32> = if total_w > 0.0 && total_w.is_finite() {
            weights
                .iter()
                .map(|&w| (w / total_w * budget).floor() as u32 + 1)
                .collect()
        } else {
            let each = TOTAL / n as u32;
            vec![each.max(1); n]
        };
        let assigned: u32 = freqs.iter().sum();
        debug_assert!(assigned <= TOTAL);
        // Hand the rounding remainder to the heaviest symbol (first on ties).
        let mut heaviest = 0usize;
        for (i, &w) in weights.iter().enumerate() {
            if w > weights[heaviest] {
                heaviest = i;
            }
        }
        freqs[heaviest] += TOTAL - assigned;

        let mut cdf = Vec::with_capacity(n + 1);
        let mut acc = 0u32;
        cdf.push(0);
        for f in freqs {
            acc += f;
            cdf.push(acc);
        }
        debug_assert_eq!(*cdf.last().unwrap(), TOTAL);
        CdfTable { min, cdf }
    }

    pub fn uniform(min: i32, n: usize) -> CdfTable {
        CdfTable::from_masses(min, &vec![1.0 / n as f64; n])
    }

    pub fn symbol_count(&self) -> usize {
        self.cdf.len() - 1
    }

    pub fn min(&self) -> i32 {
        self.min
    }

    pub fn max(&self) -> i32 {
        self.min + self.symbol_count() as i32 - 1
    }

    pub fn index_of(&self, symbol: i32) -> Option<usize> {
        if symbol < self.min() || symbol > self.max() {
            None
        } else {
            Some((symbol - self.min) as usize)
        }
    }

    pub fn symbol(&self, index: usize) -> i32 {
        self.min + index as i32
    }

    pub fn cum(&self, index: usize) -> u32 {
        self.cdf[index]
    }

    pub fn freq(&self, index: usize) -> u32 {
        self.cdf[index + 1] - self.cdf[index]
    }

    /// Largest index whose cumulative start is <= target (target < 2^16).
    pub fn find(&self, target: u32) -> usize {
        debug_assert!(target < TOTAL);
        let mut lo = 0usize;
        let mut hi = self.symbol_count() - 1;
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if self.cdf[mid] <= target {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    /// Code length of a symbol under the quantized table.
    pub fn bits(&self, index: usize) -> f64 {
        -(self.freq(index) as f64 / TOTAL as f64).log2()
    }
}

/// Interval mass of symbol `k` under the model (location `loc`, scale
/// `SCALE_MIN + softplus(raw_scale)`), matching the differentiable NLL.
fn interval_mass(model: CdfModel, k: i32, loc: f64, raw_scale: f64) -> f64 {
    let sigma = SCALE_MIN + detmath::softplus(raw_scale);
    let centered = k as f64 - loc;
    let cdf = |x: f64| match model {
        CdfModel::Gaussian => detmath::normal_cdf(x),
        CdfModel::Logistic => detmath::logistic_cdf(x),
    };
    cdf((centered + 0.5) / sigma) - cdf((centered - 0.5) / sigma)
}

/// Quantize an entropy model into codable tables, one per (loc, raw_scale)
/// context, over the integer alphabet `[min, max]`.
pub fn build_cdfs(
    model: CdfModel,
    loc: &[f64],
    raw_scale: &[f64],
    min: i32,
    max: i32,
) -> Vec<CdfTable> {
    debug_assert_eq!(loc.len(), raw_scale.len());
    debug_assert!(min <= max);
    let n = (max - min + 1) as usize;
    loc.iter()
        .zip(raw_scale)
        .map(|(&l, &s)| {
            let masses: Vec<f64> = (0..n)
                .map(|i| interval_mass(model, min + i as i32, l, s))
                .collect();
            CdfTable::from_masses(min, &masses)
        })
        .collect()
}
