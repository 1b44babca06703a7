use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::label_counts;
use crate::error::{Error, Result};
use crate::math;
use crate::tensor::{squared_distance, Tensor2};

/// Class-conditional Gaussian KDE with one shared isotropic bandwidth,
/// combined with empirical priors through Bayes' rule.
#[derive(Debug, Clone)]
pub struct PosteriorModel {
    reference: Tensor2,
    labels: Vec<usize>,
    counts: Vec<usize>,
    priors: Vec<f64>,
    /// Kernel standard deviation; the kernel covariance is `bandwidth² · I`.
    bandwidth: f64,
}

/// Silverman's rule for a `d`-dimensional Gaussian kernel over `n` points
/// with per-dimension scale `scale`: `scale · (4 / ((d + 2) n))^(1 / (d + 4))`.
pub fn silverman_bandwidth(n: usize, d: usize, scale: f64) -> f64 {
    let d = d as f64;
    scale * math::powf(4.0 / ((d + 2.0) * n as f64), 1.0 / (d + 4.0))
}

/// Fits the posterior on `features` with labels in `0..classes`.
///
/// The scale fed to Silverman's rule is the root mean per-dimension
/// (biased) variance, which is 1 for standardized features.
pub fn fit_posterior(features: &Tensor2, labels: &[usize], classes: usize) -> Result<PosteriorModel> {
    if labels.len() != features.rows() {
        return Err(Error::shape("features and labels differ in length"));
    }
    if classes == 0 {
        return Err(Error::config("posterior needs at least one class"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Validation(format!("label {bad} outside 0..{classes}")));
    }
    let counts = label_counts(labels, classes);
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Validation(format!("class {empty} has no samples")));
    }
    let n = features.rows();
    let var = features.column_variances();
    let scale = math::sqrt(var.iter().sum::<f64>() / var.len() as f64);
    let bandwidth = silverman_bandwidth(n, features.cols(), scale);
    if !(bandwidth * bandwidth > f64::MIN_POSITIVE) || !bandwidth.is_finite() {
        return Err(Error::numeric(format!("kernel bandwidth underflow ({bandwidth:e})")));
    }
    Ok(PosteriorModel {
        reference: features.clone(),
        labels: labels.to_vec(),
        priors: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        counts,
        bandwidth,
    })
}

impl PosteriorModel {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// The shared kernel covariance scale `σ` (kernel covariance `σ I`).
    pub fn kernel_variance(&self) -> f64 {
        self.bandwidth * self.bandwidth
    }

    pub fn reference(&self) -> &Tensor2 {
        &self.reference
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// `ln p(f | y_a)` for every class, optionally leaving reference row
    /// `exclude` out of its class density.
    pub fn log_class_densities(&self, query: &[f64], exclude: Option<usize>) -> Vec<f64> {
        let var = self.kernel_variance();
        let d = self.reference.cols() as f64;
        let log_norm = -0.5 * d * math::ln(2.0 * core::f64::consts::PI * var);
        let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); self.classes()];
        for (i, (row, &label)) in self.reference.row_iter().zip(&self.labels).enumerate() {
            if Some(i) == exclude {
                continue;
            }
            per_class[label].push(-squared_distance(query, row) / (2.0 * var));
        }
        per_class
            .iter()
            .enumerate()
            .map(|(a, logs)| {
                let members = self.counts[a] - usize::from(exclude.is_some_and(|i| self.labels[i] == a));
                if members == 0 {
                    f64::NEG_INFINITY
                } else {
                    math::log_sum_exp(logs) - math::ln(members as f64) + log_norm
                }
            })
            .collect()
    }

    fn normalize(&self, log_dens: &[f64]) -> Vec<f64> {
        let joint: Vec<f64> = log_dens
            .iter()
            .zip(&self.priors)
            .map(|(l, p)| l + math::ln(*p))
            .collect();
        let total = math::log_sum_exp(&joint);
        if total == f64::NEG_INFINITY {
            return vec![1.0 / self.classes() as f64; self.classes()];
        }
        joint.iter().map(|j| math::exp(j - total)).collect()
    }

    /// `p(y | f)` for an arbitrary query point.
    pub fn posterior(&self, query: &[f64]) -> Vec<f64> {
        self.normalize(&self.log_class_densities(query, None))
    }

    /// `p(y | f_i)` for reference row `i` with that row removed from the KDE.
    pub fn posterior_leave_one_out(&self, i: usize) -> Vec<f64> {
        self.normalize(&self.log_class_densities(self.reference.row(i), Some(i)))
    }
}
