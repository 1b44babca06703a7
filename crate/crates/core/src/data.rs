//! Labeled datasets: the synthetic two-factor generator and train/validation/test splits.
//!
//! Each sample carries an input `x`, a primary label `z` (the task the
//! service may learn) and a sensitive label `y` (the identity to hide).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math;
use crate::rng;
use crate::tensor::Tensor2;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub z: usize,
    pub y: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Provenance {
    Synthetic,
    External,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DatasetManifest {
    pub sample_count: usize,
    pub input_dim: usize,
    pub primary_classes: usize,
    pub sensitive_classes: usize,
    pub seed: Option<u64>,
    pub fractions: SplitFractions,
    pub provenance: Provenance,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.sample_count < 2 {
            return Err(Error::config("dataset needs at least two samples"));
        }
        if self.primary_classes < 2 || self.sensitive_classes < 2 {
            return Err(Error::config("both label sets need at least two classes"));
        }
        self.fractions.validate()
    }
}

/// Samples stored column-wise: an input matrix plus two label vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Tensor2,
    z: Vec<usize>,
    y: Vec<usize>,
    primary_classes: usize,
    sensitive_classes: usize,
}

/// Inputs and primary labels only; what the primary-task stages may see.
#[derive(Debug, Clone, Copy)]
pub struct PrimaryView<'a> {
    pub x: &'a Tensor2,
    pub z: &'a [usize],
    pub classes: usize,
}

impl Dataset {
    pub fn new(
        x: Tensor2,
        z: Vec<usize>,
        y: Vec<usize>,
        primary_classes: usize,
        sensitive_classes: usize,
    ) -> Result<Self> {
        if z.len() != x.rows() || y.len() != x.rows() {
            return Err(Error::shape(format!(
                "{} inputs but {} primary and {} sensitive labels",
                x.rows(),
                z.len(),
                y.len()
            )));
        }
        if let Some(i) = z.iter().position(|&v| v >= primary_classes) {
            return Err(Error::Validation(format!(
                "sample {i}: primary label {} outside 0..{primary_classes}",
                z[i]
            )));
        }
        if let Some(i) = y.iter().position(|&v| v >= sensitive_classes) {
            return Err(Error::Validation(format!(
                "sample {i}: sensitive label {} outside 0..{sensitive_classes}",
                y[i]
            )));
        }
        Ok(Dataset {
            x,
            z,
            y,
            primary_classes,
            sensitive_classes,
        })
    }

    pub fn from_samples(samples: &[LabeledSample], primary_classes: usize, sensitive_classes: usize) -> Result<Self> {
        let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
        let x = Tensor2::from_rows(&rows)?;
        Dataset::new(
            x,
            samples.iter().map(|s| s.z).collect(),
            samples.iter().map(|s| s.y).collect(),
            primary_classes,
            sensitive_classes,
        )
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &Tensor2 {
        &self.x
    }

    pub fn z(&self) -> &[usize] {
        &self.z
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn primary_classes(&self) -> usize {
        self.primary_classes
    }

    pub fn sensitive_classes(&self) -> usize {
        self.sensitive_classes
    }

    pub fn primary_view(&self) -> PrimaryView<'_> {
        PrimaryView {
            x: &self.x,
            z: &self.z,
            classes: self.primary_classes,
        }
    }

    pub fn sample(&self, i: usize) -> LabeledSample {
        LabeledSample {
            x: self.x.row(i).to_vec(),
            z: self.z[i],
            y: self.y[i],
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            z: indices.iter().map(|&i| self.z[i]).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            primary_classes: self.primary_classes,
            sensitive_classes: self.sensitive_classes,
        }
    }
}

/// Parameters of the two-factor generator `x = μ(y) + v(z) + ε`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct TwoFactorConfig {
    pub input_dim: usize,
    pub primary_classes: usize,
    pub sensitive_classes: usize,
    pub samples: usize,
    pub identity_spread: f64,
    pub primary_offset: f64,
    pub noise_sd: f64,
    /// Probability that `z` is tied to `y` (as `y mod c_z`) instead of drawn
    /// independently. Zero gives independent labels.
    pub correlation: f64,
}

impl Default for TwoFactorConfig {
    fn default() -> Self {
        TwoFactorConfig {
            input_dim: 16,
            primary_classes: 2,
            sensitive_classes: 20,
            samples: 2000,
            identity_spread: 2.0,
            primary_offset: 3.0,
            noise_sd: 0.5,
            correlation: 0.0,
        }
    }
}

impl TwoFactorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("input_dim must be positive"));
        }
        if self.samples < 2 {
            return Err(Error::config("need at least two samples"));
        }
        if self.primary_classes < 2 || self.sensitive_classes < 2 {
            return Err(Error::config("class counts must be at least 2"));
        }
        for (name, v) in [
            ("identity_spread", self.identity_spread),
            ("primary_offset", self.primary_offset),
            ("noise_sd", self.noise_sd),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::config("correlation must lie in [0, 1]"));
        }
        Ok(())
    }
}

fn normal(r: &mut rng::Rng) -> f64 {
    r.sample(StandardNormal)
}

/// Draws a dataset from the two-factor model; deterministic in `seed`.
///
/// Identity centers are `identity_spread · N(0, I)`. Primary offsets sit at
/// evenly spaced levels in `[-primary_offset, +primary_offset]` along one
/// random unit direction (so `±primary_offset` for two classes).
pub fn generate_two_factor(config: &TwoFactorConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let d = config.input_dim;
    let mut structure = rng::stream(seed, 1);
    let centers: Vec<Vec<f64>> = (0..config.sensitive_classes)
        .map(|_| {
            (0..d)
                .map(|_| config.identity_spread * normal(&mut structure))
                .collect()
        })
        .collect();
    let mut direction: Vec<f64> = (0..d).map(|_| normal(&mut structure)).collect();
    let norm = math::sqrt(direction.iter().map(|v| v * v).sum());
    direction.iter_mut().for_each(|v| *v /= norm);
    let levels: Vec<f64> = (0..config.primary_classes)
        .map(|k| {
            let t = 2.0 * k as f64 / (config.primary_classes - 1) as f64 - 1.0;
            t * config.primary_offset
        })
        .collect();

    let mut draws = rng::stream(seed, 2);
    let mut x = Vec::with_capacity(config.samples * d);
    let mut z = Vec::with_capacity(config.samples);
    let mut y = Vec::with_capacity(config.samples);
    for _ in 0..config.samples {
        let yi = draws.random_range(0..config.sensitive_classes);
        let tied = config.correlation > 0.0 && draws.random::<f64>() < config.correlation;
        let zi = if tied {
            yi % config.primary_classes
        } else {
            draws.random_range(0..config.primary_classes)
        };
        for k in 0..d {
            let v = centers[yi][k] + levels[zi] * direction[k] + config.noise_sd * normal(&mut draws);
            x.push(v);
        }
        z.push(zi);
        y.push(yi);
    }
    Dataset::new(
        Tensor2::from_vec(config.samples, d, x)?,
        z,
        y,
        config.primary_classes,
        config.sensitive_classes,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
            return Err(Error::config(format!("split fractions must lie in (0, 1): {self:?}")));
        }
        if math::abs(parts.iter().sum::<f64>() - 1.0) > 1e-9 {
            return Err(Error::config(format!("split fractions must sum to 1: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Index partition behind [`split_dataset`].
pub fn split_indices(n: usize, fractions: &SplitFractions, seed: u64) -> Result<[Vec<usize>; 3]> {
    fractions.validate()?;
    let n_val = libm::round(n as f64 * fractions.validation) as usize;
    let n_test = libm::round(n as f64 * fractions.test) as usize;
    if n_val == 0 || n_test == 0 || n_val + n_test >= n {
        return Err(Error::config(format!(
            "fractions {fractions:?} leave an empty split for {n} samples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, 3));
    let n_train = n - n_val - n_test;
    let test = order.split_off(n_train + n_val);
    let validation = order.split_off(n_train);
    Ok([order, validation, test])
}

/// Uniformly shuffled disjoint train/validation/test partition.
pub fn split_dataset(dataset: &Dataset, fractions: &SplitFractions, seed: u64) -> Result<Splits> {
    let [train, validation, test] = split_indices(dataset.len(), fractions, seed)?;
    Ok(Splits {
        train: dataset.subset(&train),
        validation: dataset.subset(&validation),
        test: dataset.subset(&test),
    })
}

pub fn label_counts(labels: &[usize], classes: usize) -> Vec<usize> {
    let mut counts = vec![0; classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TwoFactorConfig {
        TwoFactorConfig {
            input_dim: 8,
            primary_classes: 2,
            sensitive_classes: 4,
            samples: 100,
            ..TwoFactorConfig::default()
        }
    }

    #[test]
    fn generator_respects_ranges() {
        let ds = generate_two_factor(&small(), 3).unwrap();
        assert_eq!(ds.len(), 100);
        assert_eq!(ds.input_dim(), 8);
        assert!(label_counts(ds.z(), 2).iter().all(|&c| c > 0));
        assert!(label_counts(ds.y(), 4).iter().all(|&c| c > 0));
    }

    #[test]
    fn generator_is_deterministic() {
        assert_eq!(
            generate_two_factor(&small(), 9).unwrap(),
            generate_two_factor(&small(), 9).unwrap()
        );
        assert_ne!(
            generate_two_factor(&small(), 9).unwrap(),
            generate_two_factor(&small(), 10).unwrap()
        );
    }

    #[test]
    fn generator_rejects_bad_scales() {
        let mut c = small();
        c.noise_sd = 0.0;
        assert!(matches!(generate_two_factor(&c, 0), Err(Error::Config(_))));
        let mut c = small();
        c.identity_spread = -1.0;
        assert!(generate_two_factor(&c, 0).is_err());
    }

    #[test]
    fn full_correlation_ties_labels() {
        let mut c = small();
        c.correlation = 1.0;
        let ds = generate_two_factor(&c, 4).unwrap();
        assert!(ds.z().iter().zip(ds.y()).all(|(&z, &y)| z == y % 2));
    }

    #[test]
    fn split_sizes_and_partition() {
        let ds = generate_two_factor(&TwoFactorConfig { samples: 10, ..small() }, 1).unwrap();
        let fr = SplitFractions {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        };
        let [a, b, c] = split_indices(10, &fr, 5).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, &fr, 5).unwrap(), [a, b, c]);
        let s = split_dataset(&ds, &fr, 5).unwrap();
        assert_eq!(s.train.len() + s.validation.len() + s.test.len(), 10);
    }

    #[test]
    fn empty_split_is_config_error() {
        let fr = SplitFractions {
            train: 0.9,
            validation: 0.05,
            test: 0.05,
        };
        assert!(matches!(split_indices(5, &fr, 0), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_labels_rejected() {
        let x = Tensor2::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            Dataset::new(x, vec![0, 1], vec![0, 4], 2, 4),
            Err(Error::Validation(_))
        ));
    }
}
