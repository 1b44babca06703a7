//! Training objective: primary-task negative log-likelihood plus a pairwise
//! sensitive-removal term.
//!
//! Pairs with different sensitive labels are pulled together (their squared
//! distance is the loss); pairs sharing a sensitive label are pushed apart
//! through a hinge `max(0, m − d)`. Under standardized features the total
//! pair distance is fixed, so this drives the class-conditional feature
//! distributions toward each other.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result, Warning};
use crate::math;
use crate::nn::{Mode, Network, Params, SplitModel};
use crate::rng;
use crate::tensor::{squared_distance, Tensor2};

/// Floor applied to true-class probabilities before taking logs.
pub const PROBABILITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PairStrategy {
    /// Every unordered pair in the batch.
    #[default]
    AllPairs,
    /// A seeded random perfect matching of ⌊B/2⌋ disjoint pairs.
    RandomDisjoint,
}

/// Same-label contribution: hinge `max(0, m − d)` or the unbounded `m − d`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SameLabelTerm {
    #[default]
    Hinge,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub left_index: Vec<usize>,
    pub right_index: Vec<usize>,
    pub left_features: Tensor2,
    pub right_features: Tensor2,
    pub same_y: Vec<bool>,
    pub left_z: Vec<usize>,
    pub right_z: Vec<usize>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.same_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.same_y.is_empty()
    }

    pub fn same_count(&self) -> usize {
        self.same_y.iter().filter(|&&s| s).count()
    }

    /// Squared distance of pair `k`.
    pub fn distance(&self, k: usize) -> f64 {
        squared_distance(self.left_features.row(k), self.right_features.row(k))
    }

    /// The same batch with left and right swapped.
    pub fn swapped(&self) -> PairBatch {
        PairBatch {
            left_index: self.right_index.clone(),
            right_index: self.left_index.clone(),
            left_features: self.right_features.clone(),
            right_features: self.left_features.clone(),
            same_y: self.same_y.clone(),
            left_z: self.right_z.clone(),
            right_z: self.left_z.clone(),
        }
    }
}

pub fn make_pairs(
    features: &Tensor2,
    y: &[usize],
    z: &[usize],
    strategy: PairStrategy,
    seed: u64,
) -> Result<PairBatch> {
    let b = features.rows();
    if b < 2 {
        return Err(Error::shape("pairing needs a batch of at least two"));
    }
    if y.len() != b || z.len() != b {
        return Err(Error::shape("label vectors do not match the batch"));
    }
    let (left, right): (Vec<usize>, Vec<usize>) = match strategy {
        PairStrategy::AllPairs => (0..b).flat_map(|i| ((i + 1)..b).map(move |j| (i, j))).unzip(),
        PairStrategy::RandomDisjoint => {
            let mut order: Vec<usize> = (0..b).collect();
            order.shuffle(&mut rng::stream(seed, 0x7061_6972));
            order.chunks_exact(2).map(|c| (c[0], c[1])).unzip()
        }
    };
    Ok(PairBatch {
        left_features: features.select_rows(&left),
        right_features: features.select_rows(&right),
        same_y: left.iter().zip(&right).map(|(&i, &j)| y[i] == y[j]).collect(),
        left_z: left.iter().map(|&i| z[i]).collect(),
        right_z: right.iter().map(|&j| z[j]).collect(),
        left_index: left,
        right_index: right,
    })
}

/// Mean of `−ln p(true class)` over rows and the number of clamped rows.
pub fn primary_nll(probs: &Tensor2, z: &[usize]) -> Result<(f64, usize)> {
    if probs.rows() != z.len() {
        return Err(Error::shape("probabilities and labels differ in length"));
    }
    let mut clamped = 0;
    let mut total = 0.0;
    for (row, &label) in probs.row_iter().zip(z) {
        if label >= row.len() {
            return Err(Error::Validation(format!("label {label} outside 0..{}", row.len())));
        }
        let mut p = row[label];
        if p < PROBABILITY_FLOOR {
            p = PROBABILITY_FLOOR;
            clamped += 1;
        }
        total -= math::ln(p);
    }
    Ok((total / z.len() as f64, clamped))
}

fn primary_nll_grad(probs: &Tensor2, z: &[usize]) -> Tensor2 {
    let n = z.len() as f64;
    let mut g = Tensor2::zeros(probs.rows(), probs.cols());
    for (r, &label) in z.iter().enumerate() {
        let p = probs.get(r, label).max(PROBABILITY_FLOOR);
        g.set(r, label, -1.0 / (n * p));
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLoss {
    pub margin: f64,
    pub same_term: SameLabelTerm,
}

impl PairLoss {
    pub fn hinge(margin: f64) -> Self {
        PairLoss {
            margin,
            same_term: SameLabelTerm::Hinge,
        }
    }

    fn contribution(&self, same: bool, d: f64) -> (f64, f64) {
        match (same, self.same_term) {
            (false, _) => (d, 1.0),
            (true, SameLabelTerm::Hinge) if d < self.margin => (self.margin - d, -1.0),
            (true, SameLabelTerm::Hinge) => (0.0, 0.0),
            (true, SameLabelTerm::Linear) => (self.margin - d, -1.0),
        }
    }
}

/// Mean hinge-contrastive loss over the pairs.
pub fn sensitive_pair_loss(pairs: &PairBatch, margin: f64) -> Result<f64> {
    pair_loss_with_grad(pairs, &PairLoss::hinge(margin)).map(|(v, _, _)| v)
}

/// Pair loss value plus gradients with respect to the left and right rows.
pub fn pair_loss_with_grad(pairs: &PairBatch, loss: &PairLoss) -> Result<(f64, Tensor2, Tensor2)> {
    if !(loss.margin >= 0.0 && loss.margin.is_finite()) {
        return Err(Error::config(format!(
            "margin must be finite and non-negative, got {}",
            loss.margin
        )));
    }
    if pairs.left_features.rows() != pairs.right_features.rows()
        || pairs.left_features.cols() != pairs.right_features.cols()
        || pairs.same_y.len() != pairs.left_features.rows()
    {
        return Err(Error::shape("pair batch halves disagree"));
    }
    let p = pairs.len() as f64;
    let cols = pairs.left_features.cols();
    let mut gl = Tensor2::zeros(pairs.len(), cols);
    let mut gr = Tensor2::zeros(pairs.len(), cols);
    let mut total = 0.0;
    for k in 0..pairs.len() {
        let d = pairs.distance(k);
        let (value, slope) = loss.contribution(pairs.same_y[k], d);
        total += value;
        if slope != 0.0 {
            let l = pairs.left_features.row(k);
            let r = pairs.right_features.row(k);
            for c in 0..cols {
                let g = slope * 2.0 * (l[c] - r[c]) / p;
                gl.set(k, c, g);
                gr.set(k, c, -g);
            }
        }
    }
    Ok((total / p, gl, gr))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub primary_nll: f64,
    pub sensitive_pair: f64,
    pub total: f64,
    pub pair_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpfeLossConfig {
    pub lambda: f64,
    pub pair: PairLoss,
    pub strategy: PairStrategy,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub breakdown: LossBreakdown,
    /// θ parameters first, then φ.
    pub grads: Vec<f64>,
    pub kink_margin: f64,
    pub warnings: Vec<Warning>,
}

/// Full objective on one minibatch, differentiated through batch
/// standardization.
pub fn dpfe_total_loss(
    model: &SplitModel,
    x: &Tensor2,
    z: &[usize],
    y: &[usize],
    config: &DpfeLossConfig,
    seed: u64,
) -> Result<LossOutput> {
    if !(config.lambda >= 0.0) {
        return Err(Error::config("pair weight must be non-negative"));
    }
    if x.rows() < 2 {
        return Err(Error::shape("objective needs a batch of at least two"));
    }
    let ext_trace = model.extractor().forward_traced(x, Mode::Train)?;
    let features = ext_trace.output();
    let pred_trace = model.predictor().forward_traced(features, Mode::Train)?;
    let probs = pred_trace.output();
    let (nll, clamped) = primary_nll(probs, z)?;
    let (grad_phi, mut grad_f) = model.predictor().backward(&pred_trace, &primary_nll_grad(probs, z));

    let pairs = make_pairs(features, y, z, config.strategy, seed)?;
    let (pair_value, gl, gr) = pair_loss_with_grad(&pairs, &config.pair)?;
    if config.lambda != 0.0 {
        for k in 0..pairs.len() {
            let (i, j) = (pairs.left_index[k], pairs.right_index[k]);
            for c in 0..grad_f.cols() {
                let vi = grad_f.get(i, c) + config.lambda * gl.get(k, c);
                grad_f.set(i, c, vi);
                let vj = grad_f.get(j, c) + config.lambda * gr.get(k, c);
                grad_f.set(j, c, vj);
            }
        }
    }
    let (mut grads, _) = model.extractor().backward(&ext_trace, &grad_f);
    grads.extend(grad_phi);

    let kink_margin = model
        .extractor()
        .relu_margin(&ext_trace)
        .min(model.predictor().relu_margin(&pred_trace));
    let mut warnings = Vec::new();
    if clamped > 0 {
        warnings.push(Warning::ProbabilityClamped { count: clamped });
    }
    Ok(LossOutput {
        breakdown: LossBreakdown {
            primary_nll: nll,
            sensitive_pair: pair_value,
            total: nll + config.lambda * pair_value,
            pair_weight: config.lambda,
        },
        grads,
        kink_margin,
        warnings,
    })
}

/// Primary-only objective for a split model (no sensitive labels involved).
pub fn split_primary_loss(model: &SplitModel, x: &Tensor2, z: &[usize]) -> Result<LossOutput> {
    let ext_trace = model.extractor().forward_traced(x, Mode::Train)?;
    let pred_trace = model.predictor().forward_traced(ext_trace.output(), Mode::Train)?;
    let probs = pred_trace.output();
    let (nll, clamped) = primary_nll(probs, z)?;
    let (grad_phi, grad_f) = model.predictor().backward(&pred_trace, &primary_nll_grad(probs, z));
    let (mut grads, _) = model.extractor().backward(&ext_trace, &grad_f);
    grads.extend(grad_phi);
    let kink_margin = model
        .extractor()
        .relu_margin(&ext_trace)
        .min(model.predictor().relu_margin(&pred_trace));
    Ok(primary_output(nll, clamped, grads, kink_margin))
}

/// Primary-only objective for a plain classifier network ending in softmax.
pub fn network_primary_loss(network: &Network, x: &Tensor2, z: &[usize]) -> Result<LossOutput> {
    let trace = network.forward_traced(x, Mode::Train)?;
    let probs = trace.output();
    let (nll, clamped) = primary_nll(probs, z)?;
    let (grads, _) = network.backward(&trace, &primary_nll_grad(probs, z));
    debug_assert_eq!(grads.len(), network.param_count());
    let kink_margin = network.relu_margin(&trace);
    Ok(primary_output(nll, clamped, grads, kink_margin))
}

fn primary_output(nll: f64, clamped: usize, grads: Vec<f64>, kink_margin: f64) -> LossOutput {
    let mut warnings = Vec::new();
    if clamped > 0 {
        warnings.push(Warning::ProbabilityClamped { count: clamped });
    }
    LossOutput {
        breakdown: LossBreakdown {
            primary_nll: nll,
            sensitive_pair: 0.0,
            total: nll,
            pair_weight: 0.0,
        },
        grads,
        kink_margin,
        warnings,
    }
}
