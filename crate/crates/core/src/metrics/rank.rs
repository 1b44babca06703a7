use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::math;
use crate::rng;
use crate::tensor::Tensor2;

use super::knn::one_nn_error;
use super::posterior::PosteriorModel;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrivacyReport {
    /// Log-rank privacy in `[0, 1]`.
    pub lrp: f64,
    /// Mean of `rank / c_y`.
    pub rank_mean: f64,
    /// Population standard deviation of `rank / c_y`.
    pub rank_std: f64,
    pub one_nn_error: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankStatistics {
    pub lrp: f64,
    pub rank_mean: f64,
    pub rank_std: f64,
    /// 1-based rank of the true label for every row.
    pub ranks: Vec<usize>,
}

/// Ranks each row's true-label probability among the row (descending).
///
/// Equal probabilities form a tied block; the true label's position in the
/// block is drawn uniformly from the seeded stream, which is only consulted
/// when a tie actually occurs.
pub fn rank_statistics(posteriors: &Tensor2, labels: &[usize], seed: u64) -> Result<RankStatistics> {
    let classes = posteriors.cols();
    if classes < 2 {
        return Err(Error::Undefined(
            "log-rank privacy needs at least two sensitive classes".into(),
        ));
    }
    if labels.len() != posteriors.rows() {
        return Err(Error::shape("posteriors and labels differ in length"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Validation(alloc::format!("label {bad} outside 0..{classes}")));
    }
    let mut r = rng::stream(seed, 0x7261_6e6b);
    let ranks: Vec<usize> = posteriors
        .row_iter()
        .zip(labels)
        .map(|(row, &label)| {
            let p = row[label];
            let above = row.iter().filter(|&&q| q > p).count();
            let tied = row.iter().filter(|&&q| q == p).count() - 1;
            let offset = if tied > 0 { r.random_range(0..=tied) } else { 0 };
            above + 1 + offset
        })
        .collect();
    let n = ranks.len() as f64;
    let c = classes as f64;
    let lrp = ranks.iter().map(|&k| math::ln(k as f64)).sum::<f64>() / (n * math::ln(c));
    let rank_mean = ranks.iter().map(|&k| k as f64 / c).sum::<f64>() / n;
    let var = ranks
        .iter()
        .map(|&k| {
            let d = k as f64 / c - rank_mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(RankStatistics {
        lrp,
        rank_mean,
        rank_std: math::sqrt(var),
        ranks,
    })
}

fn assemble(rows: Vec<Vec<f64>>, features: &Tensor2, labels: &[usize], seed: u64) -> Result<PrivacyReport> {
    let classes = rows.first().map_or(0, Vec::len);
    let posteriors = Tensor2::from_vec(rows.len(), classes.max(1), rows.concat())?;
    let stats = rank_statistics(&posteriors, labels, seed)?;
    Ok(PrivacyReport {
        lrp: stats.lrp,
        rank_mean: stats.rank_mean,
        rank_std: stats.rank_std,
        one_nn_error: one_nn_error(features, labels)?,
        samples: labels.len(),
    })
}

/// Privacy of `features` (with true labels `labels`) under a fitted posterior.
pub fn privacy_report(
    posterior: &PosteriorModel,
    features: &Tensor2,
    labels: &[usize],
    seed: u64,
) -> Result<PrivacyReport> {
    if features.rows() != labels.len() {
        return Err(Error::shape("features and labels differ in length"));
    }
    if features.cols() != posterior.reference().cols() {
        return Err(Error::shape("feature dimension differs from the posterior's"));
    }
    let rows = features.row_iter().map(|f| posterior.posterior(f)).collect();
    assemble(rows, features, labels, seed)
}

/// Privacy of the posterior's own reference set, each point scored with
/// itself left out of the density estimate.
pub fn privacy_report_loo(posterior: &PosteriorModel, seed: u64) -> Result<PrivacyReport> {
    let rows = (0..posterior.reference().rows())
        .map(|i| posterior.posterior_leave_one_out(i))
        .collect();
    assemble(rows, posterior.reference(), posterior.labels(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn perfect_posterior_has_zero_lrp() {
        let p = Tensor2::from_vec(3, 3, vec![0.8, 0.1, 0.1, 0.2, 0.7, 0.1, 0.0, 0.1, 0.9]).unwrap();
        let s = rank_statistics(&p, &[0, 1, 2], 1).unwrap();
        assert_eq!(s.lrp, 0.0);
        assert_eq!(s.ranks, vec![1, 1, 1]);
    }

    #[test]
    fn worst_rank_has_unit_lrp() {
        let p = Tensor2::from_vec(1, 4, vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let s = rank_statistics(&p, &[3], 0).unwrap();
        assert!((s.lrp - 1.0).abs() < 1e-15);
        assert_eq!(s.rank_mean, 1.0);
    }

    #[test]
    fn single_class_is_undefined() {
        let p = Tensor2::from_vec(1, 1, vec![1.0]).unwrap();
        assert!(matches!(rank_statistics(&p, &[0], 0), Err(Error::Undefined(_))));
    }

    #[test]
    fn seed_irrelevant_without_ties() {
        let p = Tensor2::from_vec(2, 3, vec![0.5, 0.3, 0.2, 0.1, 0.6, 0.3]).unwrap();
        let a = rank_statistics(&p, &[1, 2], 1).unwrap();
        let b = rank_statistics(&p, &[1, 2], 999).unwrap();
        assert_eq!(a, b);
    }
}
