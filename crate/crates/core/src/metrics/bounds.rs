//! Lower bound on I(f; z) and kernel-density upper bounds on I(f; y).
//!
//! All quantities are in nats. `sigma` is the isotropic kernel covariance
//! scale: every Gaussian involved has covariance `sigma · I`.

use alloc::format;
use alloc::vec::Vec;

use crate::data::label_counts;
use crate::error::{Error, Result, Warning};
use crate::math;
use crate::objective::PROBABILITY_FLOOR;
use crate::tensor::{squared_distance, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundEstimates {
    pub lower_l: f64,
    pub upper_u1: f64,
    pub upper_u2: f64,
    pub sigma: f64,
}

/// `H(z) + mean ln q(z_i | f_i)` with the empirical label entropy.
///
/// `q_rows[i]` is the predictor's distribution over primary classes for
/// sample `i`. Returns the bound and the number of clamped probabilities.
pub fn bound_l(q_rows: &Tensor2, z: &[usize]) -> Result<(f64, usize)> {
    if q_rows.rows() != z.len() {
        return Err(Error::shape("q rows and labels differ in length"));
    }
    let classes = q_rows.cols();
    if let Some(&bad) = z.iter().find(|&&l| l >= classes) {
        return Err(Error::Validation(format!("label {bad} outside 0..{classes}")));
    }
    let n = z.len() as f64;
    let entropy: f64 = label_counts(z, classes)
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * math::ln(p)
        })
        .sum();
    let mut clamped = 0;
    let mut mean_log = 0.0;
    for (row, &label) in q_rows.row_iter().zip(z) {
        let mut q = row[label];
        if q < PROBABILITY_FLOOR {
            q = PROBABILITY_FLOOR;
            clamped += 1;
        }
        mean_log += math::ln(q);
    }
    Ok((entropy + mean_log / n, clamped))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("sigma must be positive, got {sigma}")))
    }
}

/// KL divergence between `N(mu_p, σI)` and `N(mu_q, σI)`: `‖mu_p − mu_q‖² / (2σ)`.
pub fn gaussian_kl(mu_p: &[f64], mu_q: &[f64], sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if mu_p.len() != mu_q.len() {
        return Err(Error::shape("means differ in dimension"));
    }
    Ok(squared_distance(mu_p, mu_q) / (2.0 * sigma))
}

/// Mixture of isotropic Gaussians sharing one covariance `σI`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() {
            return Err(Error::shape("mixture needs one mean per weight"));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || math::abs(weights.iter().sum::<f64>() - 1.0) > 1e-9 {
            return Err(Error::Validation(
                "mixture weights must be non-negative and sum to 1".into(),
            ));
        }
        let d = means[0].len();
        if means.iter().any(|m| m.len() != d) {
            return Err(Error::shape("mixture means differ in dimension"));
        }
        Ok(GaussianMixture { weights, means })
    }

    /// Equal-weight mixture centred on the rows (the KDE of those points).
    pub fn from_points(points: &[&[f64]]) -> Result<Self> {
        let w = 1.0 / points.len() as f64;
        Self::new(
            points.iter().map(|_| w).collect(),
            points.iter().map(|p| p.to_vec()).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn log_density(&self, x: &[f64], sigma: f64) -> f64 {
        let d = self.dim() as f64;
        let log_norm = -0.5 * d * math::ln(2.0 * core::f64::consts::PI * sigma);
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.means)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, m)| math::ln(*w) - squared_distance(x, m) / (2.0 * sigma))
            .collect();
        math::log_sum_exp(&terms) + log_norm
    }
}

/// Upper bound on `KL(p ‖ q)`: `Σ_{a,b} π_a ω_b KL(p_a ‖ q_b)`.
pub fn gmm_kl_upper(p: &GaussianMixture, q: &GaussianMixture, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if p.dim() != q.dim() {
        return Err(Error::shape("mixtures differ in dimension"));
    }
    let mut total = 0.0;
    for (pa, ma) in p.weights.iter().zip(&p.means) {
        for (wb, mb) in q.weights.iter().zip(&q.means) {
            total += pa * wb * gaussian_kl(ma, mb, sigma)?;
        }
    }
    Ok(total)
}

fn class_rows<'a>(features: &'a Tensor2, labels: &[usize], classes: usize) -> Result<Vec<Vec<&'a [f64]>>> {
    if labels.len() != features.rows() {
        return Err(Error::shape("features and labels differ in length"));
    }
    let mut rows: Vec<Vec<&[f64]>> = (0..classes).map(|_| Vec::new()).collect();
    for (row, &label) in features.row_iter().zip(labels) {
        if label >= classes {
            return Err(Error::Validation(format!("label {label} outside 0..{classes}")));
        }
        rows[label].push(row);
    }
    if let Some(empty) = rows.iter().position(Vec::is_empty) {
        return Err(Error::Validation(format!("class {empty} has no samples")));
    }
    Ok(rows)
}

/// `Σ_a Σ_{b≠a} p(y_a) p(y_b) KL[p(f|y_a) ‖ p(f|y_b)]` with KDE class
/// conditionals, each KL replaced by its mixture upper bound.
///
/// Two classes whose point sets are identical (as multisets) have equal
/// KDEs, so their KL is exactly zero and the looser mixture bound is skipped.
pub fn bound_u1(features: &Tensor2, labels: &[usize], classes: usize, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if classes < 2 {
        return Err(Error::config("U1 needs at least two classes"));
    }
    let rows = class_rows(features, labels, classes)?;
    let n = features.rows() as f64;
    let mixtures: Vec<GaussianMixture> = rows
        .iter()
        .map(|r| GaussianMixture::from_points(r))
        .collect::<Result<_>>()?;
    let priors: Vec<f64> = rows.iter().map(|r| r.len() as f64 / n).collect();
    let sorted: Vec<Vec<&[f64]>> = rows
        .iter()
        .map(|r| {
            let mut s = r.clone();
            s.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
            s
        })
        .collect();
    let mut total = 0.0;
    for a in 0..classes {
        for b in 0..classes {
            if a != b && sorted[a] != sorted[b] {
                total += priors[a] * priors[b] * gmm_kl_upper(&mixtures[a], &mixtures[b], sigma)?;
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct U2Bounds {
    /// `Σ_{i<j, y_i≠y_j} d_ij / (σ N²)`.
    pub direct: f64,
    /// `Σ_{i<j, y_i=y_j} (c − d_ij) / (σ N²)`.
    pub equivalent: f64,
    /// Number of unordered same-label pairs `k`.
    pub same_pairs: usize,
    /// `c = N² d / k`; `None` when there is no same-label pair.
    pub constant: Option<f64>,
    pub warnings: Vec<Warning>,
}

/// Both forms of the pairwise upper bound.
///
/// For standardized features (zero mean, unit biased variance) the sum of
/// squared distances over all unordered pairs is exactly `N² d`, so setting
/// `k · c = N² d` makes the two forms equal. With no same-label pairs the
/// equivalent form degenerates to `N² d / (σ N²)`.
pub fn bound_u2(features: &Tensor2, labels: &[usize], sigma: f64) -> Result<U2Bounds> {
    check_sigma(sigma)?;
    if labels.len() != features.rows() {
        return Err(Error::shape("features and labels differ in length"));
    }
    let n = features.rows();
    let mut diff_sum = 0.0;
    let mut same_sum = 0.0;
    let mut same_pairs = 0usize;
    let mut diff_pairs = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = features.squared_distance(i, j);
            if labels[i] == labels[j] {
                same_sum += d;
                same_pairs += 1;
            } else {
                diff_sum += d;
                diff_pairs += 1;
            }
        }
    }
    let n2 = (n * n) as f64;
    let total_constant = n2 * features.cols() as f64;
    let mut warnings = Vec::new();
    if diff_pairs == 0 {
        warnings.push(Warning::NoDifferentPairs);
    }
    let constant = (same_pairs > 0).then(|| total_constant / same_pairs as f64);
    let equivalent = match constant {
        Some(c) => (same_pairs as f64 * c - same_sum) / (sigma * n2),
        None => total_constant / (sigma * n2),
    };
    Ok(U2Bounds {
        direct: diff_sum / (sigma * n2),
        equivalent,
        same_pairs,
        constant,
        warnings,
    })
}

/// `L` from predictor outputs, `U1` and the direct `U2` on the features.
pub fn estimate_bounds(
    q_rows: &Tensor2,
    z: &[usize],
    features: &Tensor2,
    y: &[usize],
    classes: usize,
    sigma: f64,
) -> Result<BoundEstimates> {
    Ok(BoundEstimates {
        lower_l: bound_l(q_rows, z)?.0,
        upper_u1: bound_u1(features, y, classes, sigma)?,
        upper_u2: bound_u2(features, y, sigma)?.direct,
        sigma,
    })
}
