//! Central-difference verification of analytic gradients.

use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::Result;
use crate::math;
use crate::nn::Params;
use crate::rng;

/// A loss value, its analytic gradient, and the distance of the evaluation
/// point from the nearest non-differentiable kink (e.g. smallest |ReLU input|).
#[derive(Debug, Clone)]
pub struct LossEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub kink_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter indices that were actually compared.
    pub probed: Vec<usize>,
    /// Candidate probes discarded because a kink was within reach.
    pub rejected: usize,
    /// Probes where both derivatives sat below the rounding floor of the
    /// central difference, e.g. a bias absorbed by batch standardization.
    pub unresolved: usize,
}

/// Compares the analytic gradient with central differences on `probe_count`
/// randomly chosen parameters.
///
/// A probe is rejected when any of the three evaluation points sits within
/// `10·eps` of a kink. A probe is also set aside when both `|a|` and `|c|`
/// are below `64·ε·max(|L|, 1) / eps`, where the difference quotient is pure
/// rounding noise. The error of one probe is `|a − c| / (|a| + |c| + 1e-12)`.
pub fn finite_diff_check<P, F>(model: &P, loss: F, probe_count: usize, eps: f64, seed: u64) -> Result<GradCheckReport>
where
    P: Params + Clone,
    F: Fn(&P) -> Result<LossEval>,
{
    let n = model.param_count();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        probed: Vec::new(),
        rejected: 0,
        unresolved: 0,
    };
    if probe_count == 0 || n == 0 {
        return Ok(report);
    }
    let base = loss(model)?;
    let params = model.params();
    let mut r = rng::stream(seed, 0x6772_6164);
    let max_attempts = probe_count * 20;
    let mut attempts = 0;
    let mut work = model.clone();
    let mut shifted = params.clone();
    while report.probed.len() < probe_count && attempts < max_attempts {
        attempts += 1;
        let idx = r.random_range(0..n);
        if base.kink_margin < 10.0 * eps {
            report.rejected += 1;
            continue;
        }
        shifted[idx] = params[idx] + eps;
        work.set_params(&shifted)?;
        let plus = loss(&work)?;
        shifted[idx] = params[idx] - eps;
        work.set_params(&shifted)?;
        let minus = loss(&work)?;
        shifted[idx] = params[idx];
        if plus.kink_margin < 10.0 * eps || minus.kink_margin < 10.0 * eps {
            report.rejected += 1;
            continue;
        }
        let central = (plus.value - minus.value) / (2.0 * eps);
        let analytic = base.grad[idx];
        let scale = math::abs(plus.value).max(math::abs(minus.value)).max(1.0);
        let floor = 64.0 * f64::EPSILON * scale / eps;
        if math::abs(analytic) < floor && math::abs(central) < floor {
            report.unresolved += 1;
            continue;
        }
        let err = math::abs(analytic - central) / (math::abs(analytic) + math::abs(central) + 1e-12);
        report.max_relative_error = report.max_relative_error.max(err);
        report.probed.push(idx);
    }
    Ok(report)
}
