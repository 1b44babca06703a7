//! Test-time noise sweeps tracing accuracy against privacy, and the
//! superiority comparison between two such curves.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{covariance, psd_sqrt, SquareMatrix};
use crate::math;
use crate::metrics::{fit_posterior, privacy_report_loo, PrivacyReport};
use crate::nn::{accuracy, SplitModel};
use crate::rng;
use crate::tensor::Tensor2;

const NOISE_TAG: u64 = 0x6e6f_6973;
const RANK_TAG: u64 = 0x7469_6573;

pub const DEFAULT_RATIOS: [f64; 8] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];

/// Biased covariance of the extractor's features on `x`.
pub fn feature_covariance(model: &SplitModel, x: &Tensor2) -> Result<SquareMatrix> {
    covariance(&model.extract(x)?)
}

/// Gaussian noise shaped by a feature covariance `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    factor: SquareMatrix,
}

impl NoiseSpec {
    pub fn from_covariance(c: &SquareMatrix) -> Result<Self> {
        Ok(NoiseSpec { factor: psd_sqrt(c)? })
    }

    /// `L` with `L · Lᵀ = C`.
    pub fn factor(&self) -> &SquareMatrix {
        &self.factor
    }

    /// `features + √r · L · g` row-wise with `g ~ N(0, I)`. For `r = 0` the
    /// input is returned unchanged.
    pub fn perturb(&self, features: &Tensor2, ratio: f64, seed: u64) -> Result<Tensor2> {
        if !(ratio >= 0.0 && ratio.is_finite()) {
            return Err(Error::config(format!(
                "noise ratio must be finite and non-negative, got {ratio}"
            )));
        }
        let d = self.factor.dim();
        if features.cols() != d {
            return Err(Error::shape(format!(
                "{} features, noise is {d}-dimensional",
                features.cols()
            )));
        }
        let mut out = features.clone();
        if ratio == 0.0 {
            return Ok(out);
        }
        let s = math::sqrt(ratio);
        let mut r = rng::stream(seed, NOISE_TAG);
        let mut g = vec![0.0; d];
        for row in 0..out.rows() {
            for v in g.iter_mut() {
                *v = r.sample(StandardNormal);
            }
            let dst = out.row_mut(row);
            for (i, o) in dst.iter_mut().enumerate() {
                let lg: f64 = (0..d).map(|j| self.factor.get(i, j) * g[j]).sum();
                *o += s * lg;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvePoint {
    pub ratio: f64,
    pub accuracy: f64,
    pub lrp: f64,
    pub rank_mean: f64,
    pub rank_std: f64,
    pub one_nn_error: f64,
    pub seed_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TradeoffCurve {
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub privacy: PrivacyReport,
}

/// Primary accuracy through the predictor and leave-one-out privacy of the
/// (noisy) test features.
pub fn noisy_eval(model: &SplitModel, test: &Dataset, noise: &NoiseSpec, ratio: f64, seed: u64) -> Result<Evaluation> {
    let clean = model.extract(test.x())?;
    let features = noise.perturb(&clean, ratio, seed)?;
    evaluate_features(model, &features, test, seed)
}

/// Noiseless evaluation on a held-out split.
pub fn clean_eval(model: &SplitModel, test: &Dataset, seed: u64) -> Result<Evaluation> {
    let features = model.extract(test.x())?;
    evaluate_features(model, &features, test, seed)
}

fn evaluate_features(model: &SplitModel, features: &Tensor2, test: &Dataset, seed: u64) -> Result<Evaluation> {
    let probs = model.predict(features)?;
    let posterior = fit_posterior(features, test.y(), test.sensitive_classes())?;
    Ok(Evaluation {
        accuracy: accuracy(&probs, test.z()),
        privacy: privacy_report_loo(&posterior, rng::derive(seed, RANK_TAG))?,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct SweepConfig {
    pub ratios: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ratios: DEFAULT_RATIOS.to_vec(),
            replicates: 3,
            seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() {
            return Err(Error::config("ratio list is empty"));
        }
        if !self.ratios.contains(&0.0) {
            return Err(Error::config("ratio list must include 0"));
        }
        if self.ratios.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::config("ratios must be finite and non-negative"));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates must be at least 1"));
        }
        Ok(())
    }
}

/// One averaged point per ratio, sorted by increasing ratio. Replicate `s`
/// draws the same standard-normal matrix at every ratio so curves vary
/// smoothly in `r`.
pub fn sweep(model: &SplitModel, train_x: &Tensor2, test: &Dataset, config: &SweepConfig) -> Result<TradeoffCurve> {
    config.validate()?;
    let noise = NoiseSpec::from_covariance(&feature_covariance(model, train_x)?)?;
    let clean = model.extract(test.x())?;
    let mut ratios = config.ratios.clone();
    ratios.sort_by(f64::total_cmp);
    ratios.dedup();
    let mut points = Vec::with_capacity(ratios.len());
    for &ratio in &ratios {
        let mut acc = [0.0; 5];
        for s in 0..config.replicates {
            let seed = rng::derive(config.seed, s as u64);
            let features = noise.perturb(&clean, ratio, seed)?;
            let e = evaluate_features(model, &features, test, seed)?;
            for (slot, v) in acc.iter_mut().zip([
                e.accuracy,
                e.privacy.lrp,
                e.privacy.rank_mean,
                e.privacy.rank_std,
                e.privacy.one_nn_error,
            ]) {
                *slot += v;
            }
        }
        let n = config.replicates as f64;
        points.push(CurvePoint {
            ratio,
            accuracy: acc[0] / n,
            lrp: acc[1] / n,
            rank_mean: acc[2] / n,
            rank_std: acc[3] / n,
            one_nn_error: acc[4] / n,
            seed_count: config.replicates,
        });
    }
    Ok(TradeoffCurve { points })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PrivacyAxis {
    #[default]
    Lrp,
    OneNn,
}

impl PrivacyAxis {
    pub fn value(self, p: &CurvePoint) -> f64 {
        match self {
            PrivacyAxis::Lrp => p.lrp,
            PrivacyAxis::OneNn => p.one_nn_error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Verdict {
    SuperiorA,
    SuperiorB,
    Mixed,
}

fn accuracy_range(c: &TradeoffCurve) -> Result<(f64, f64)> {
    if c.points.is_empty() {
        return Err(Error::Validation("curve has no points".into()));
    }
    let lo = c.points.iter().map(|p| p.accuracy).fold(f64::INFINITY, f64::min);
    let hi = c.points.iter().map(|p| p.accuracy).fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

fn overlap(a: &TradeoffCurve, b: &TradeoffCurve) -> Result<(f64, f64)> {
    let (alo, ahi) = accuracy_range(a)?;
    let (blo, bhi) = accuracy_range(b)?;
    let (lo, hi) = (alo.max(blo), ahi.min(bhi));
    if lo > hi {
        return Err(Error::Validation(format!(
            "accuracy ranges [{alo}, {ahi}] and [{blo}, {bhi}] do not overlap"
        )));
    }
    Ok((lo, hi))
}

/// `points` evenly spaced accuracies strictly inside the overlap of the two
/// curves' accuracy ranges.
pub fn default_accuracy_grid(a: &TradeoffCurve, b: &TradeoffCurve, points: usize) -> Result<Vec<f64>> {
    let (lo, hi) = overlap(a, b)?;
    if lo == hi {
        return Err(Error::Validation("accuracy ranges touch at a single point".into()));
    }
    let step = (hi - lo) / (points + 1) as f64;
    Ok((1..=points).map(|k| lo + step * k as f64).collect())
}

/// Linear interpolation of privacy at accuracy `a`, with the curve's points
/// ordered by accuracy. `None` outside the curve's range.
pub fn interpolate_privacy(curve: &TradeoffCurve, a: f64, axis: PrivacyAxis) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.accuracy, axis.value(p))).collect();
    pts.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    if pts.len() == 1 {
        return (pts[0].0 == a).then_some(pts[0].1);
    }
    pts.windows(2).find_map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if a < x0 || a > x1 {
            None
        } else if x1 == x0 {
            Some(y0.max(y1))
        } else {
            Some(y0 + (y1 - y0) * (a - x0) / (x1 - x0))
        }
    })
}

/// `SuperiorA` iff A's interpolated privacy strictly exceeds B's at every
/// grid accuracy both curves cover; symmetric for B; otherwise `Mixed`.
pub fn superiority_check(a: &TradeoffCurve, b: &TradeoffCurve, grid: &[f64], axis: PrivacyAxis) -> Result<Verdict> {
    overlap(a, b)?;
    let pairs: Vec<(f64, f64)> = grid
        .iter()
        .filter_map(|&g| Some((interpolate_privacy(a, g, axis)?, interpolate_privacy(b, g, axis)?)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Validation("no grid accuracy lies inside both curves".into()));
    }
    Ok(if pairs.iter().all(|(pa, pb)| pa > pb) {
        Verdict::SuperiorA
    } else if pairs.iter().all(|(pa, pb)| pb > pa) {
        Verdict::SuperiorB
    } else {
        Verdict::Mixed
    })
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::shape(
            "spearman needs two equal-length series of at least two values",
        ));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("spearman of a constant series".into()));
    }
    Ok(sxy / math::sqrt(sxx * syy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(pts: &[(f64, f64)]) -> TradeoffCurve {
        TradeoffCurve {
            points: pts
                .iter()
                .enumerate()
                .map(|(i, &(accuracy, lrp))| CurvePoint {
                    ratio: i as f64,
                    accuracy,
                    lrp,
                    rank_mean: 0.0,
                    rank_std: 0.0,
                    one_nn_error: 0.0,
                    seed_count: 1,
                })
                .collect(),
        }
    }

    #[test]
    fn shifted_curve_is_superior() {
        let b = curve(&[(0.9, 0.1), (0.7, 0.3), (0.5, 0.6)]);
        let a = curve(&[(0.9, 0.2), (0.7, 0.4), (0.5, 0.7)]);
        let grid = default_accuracy_grid(&a, &b, 5).unwrap();
        assert_eq!(
            superiority_check(&a, &b, &grid, PrivacyAxis::Lrp).unwrap(),
            Verdict::SuperiorA
        );
        assert_eq!(
            superiority_check(&b, &a, &grid, PrivacyAxis::Lrp).unwrap(),
            Verdict::SuperiorB
        );
    }

    #[test]
    fn identical_curves_are_mixed() {
        let a = curve(&[(0.9, 0.1), (0.5, 0.6)]);
        let grid = default_accuracy_grid(&a, &a, 5).unwrap();
        assert_eq!(
            superiority_check(&a, &a, &grid, PrivacyAxis::Lrp).unwrap(),
            Verdict::Mixed
        );
    }

    #[test]
    fn crossing_curves_are_mixed() {
        let a = curve(&[(0.9, 0.1), (0.5, 0.7)]);
        let b = curve(&[(0.9, 0.2), (0.5, 0.6)]);
        let grid = default_accuracy_grid(&a, &b, 5).unwrap();
        assert_eq!(
            superiority_check(&a, &b, &grid, PrivacyAxis::Lrp).unwrap(),
            Verdict::Mixed
        );
    }

    #[test]
    fn disjoint_ranges_error() {
        let a = curve(&[(0.9, 0.1), (0.8, 0.2)]);
        let b = curve(&[(0.6, 0.1), (0.5, 0.2)]);
        assert!(superiority_check(&a, &b, &[0.7], PrivacyAxis::Lrp).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        // Ranks (1.5, 1.5, 3) against (1, 2, 3): r = 1.5 / sqrt(1.5 · 2).
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 1.5 / (1.5_f64 * 2.0).sqrt()).abs() < 1e-15);
        assert!(matches!(spearman(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::Undefined(_))));
    }

    #[test]
    fn zero_ratio_is_identity() {
        let c = SquareMatrix::from_vec(2, vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        let noise = NoiseSpec::from_covariance(&c).unwrap();
        let f = Tensor2::from_vec(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(noise.perturb(&f, 0.0, 9).unwrap(), f);
        assert_ne!(noise.perturb(&f, 1.0, 9).unwrap(), f);
    }
}
