use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grad::{Array, Executor, Tape, TensorId};

/// Settings for finite-difference gradient verification.
#[derive(Clone, Debug)]
pub struct CheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Spot-check at most this many elements per leaf (None = all).
    pub max_checks_per_leaf: Option<usize>,
    /// Seed for element subsampling.
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            step: 1e-6,
            tolerance: 1e-4,
            max_checks_per_leaf: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LeafReport {
    pub leaf: usize,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub leaves: Vec<LeafReport>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Compare reverse-mode gradients against two-sided finite differences.
///
/// `build` must deterministically construct a scalar loss from the given
/// leaves (any randomness inside must be frozen by the closure); it is
/// re-evaluated with perturbed leaf values to form central differences.
pub fn check_gradients<F>(leaves: &[Array], build: F, cfg: &CheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[TensorId]) -> Result<TensorId>,
{
    let eval = |values: &[Array]| -> Result<(Tape, Vec<TensorId>, TensorId)> {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = values.iter().map(|a| tape.leaf(a.clone())).collect();
        let loss = build(&mut tape, &ids)?;
        Ok((tape, ids, loss))
    };

    let (tape, ids, loss) = eval(leaves)?;
    let grads = tape.backward(loss)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        leaves: Vec::new(),
        max_rel_err: 0.0,
        tolerance: cfg.tolerance,
        pass: true,
    };
    let mut work: Vec<Array> = leaves.to_vec();
    for (li, leaf) in leaves.iter().enumerate() {
        let g = grads.wrt(ids[li]).expect("leaf gradient present");
        let n = leaf.elems();
        let indices: Vec<usize> = match cfg.max_checks_per_leaf {
            Some(m) if m < n => rand::seq::index::sample(&mut rng, n, m).into_vec(),
            _ => (0..n).collect(),
        };
        let mut worst = 0.0f64;
        for &e in &indices {
            let orig = work[li].data()[e];
            work[li].data_mut()[e] = orig + cfg.step;
            let (t_hi, _, l_hi) = eval(&work)?;
            let hi = t_hi.value(l_hi).item();
            work[li].data_mut()[e] = orig - cfg.step;
            let (t_lo, _, l_lo) = eval(&work)?;
            let lo = t_lo.value(l_lo).item();
            work[li].data_mut()[e] = orig;
            let fd = (hi - lo) / (2.0 * cfg.step);
            worst = worst.max(rel_err(g.data()[e], fd));
        }
        report.max_rel_err = report.max_rel_err.max(worst);
        report.leaves.push(LeafReport {
            leaf: li,
            checked: indices.len(),
            max_rel_err: worst,
        });
    }
    report.pass = report.max_rel_err < cfg.tolerance;
    Ok(report)
}
