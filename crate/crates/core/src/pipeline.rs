//! Three-stage training: original classifier, PCA bottleneck fine-tuned on
//! the primary task, then fine-tuning with the pairwise sensitive-removal term.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::{Dataset, PrimaryView};
use crate::error::{Error, Result, Warning};
use crate::linalg::{covariance, symmetric_eigen};
use crate::math;
use crate::nn::{accuracy, Dense, Layer, Mode, Network, Params, SplitModel, Standardize, VARIANCE_FLOOR};
use crate::objective::{
    dpfe_total_loss, network_primary_loss, split_primary_loss, DpfeLossConfig, LossOutput, PairLoss, PairStrategy,
    SameLabelTerm,
};
use crate::optim::{train_step, AdamConfig, OptimizerState};
use crate::rng;
use crate::tensor::Tensor2;

const ORIGINAL_INIT: u64 = 0x6d30;
const ORIGINAL_SHUFFLE: u64 = 0x6d30_7368;
const FINE_TUNE_SHUFFLE: u64 = 0x6674_7368;
const PAIR_TAG: u64 = 0x7061_6972_7374;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct StageEpochs {
    pub original: usize,
    pub simple: usize,
    pub dpfe: usize,
}

impl Default for StageEpochs {
    fn default() -> Self {
        StageEpochs {
            original: 40,
            simple: 15,
            dpfe: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(default, deny_unknown_fields)
)]
pub struct TrainConfig {
    pub epochs: StageEpochs,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Weight of the pairwise sensitive term.
    pub lambda: f64,
    /// Hinge margin; `None` means `2 · feature_dim`, the expected squared
    /// distance between two standardized features.
    pub margin: Option<f64>,
    pub feature_dim: usize,
    /// The bottleneck is inserted after this layer of the original network.
    pub layer_index: usize,
    pub hidden: Vec<usize>,
    pub strategy: PairStrategy,
    pub same_term: SameLabelTerm,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: StageEpochs::default(),
            batch_size: 64,
            adam: AdamConfig::default(),
            lambda: 1.0,
            margin: None,
            feature_dim: 10,
            layer_index: 3,
            hidden: vec![64, 64],
            strategy: PairStrategy::AllPairs,
            same_term: SameLabelTerm::Hinge,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let e = self.epochs;
        if e.original == 0 || e.simple == 0 || e.dpfe == 0 {
            return Err(Error::config("every stage needs at least one epoch"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("batch_size must be at least 2"));
        }
        if self.feature_dim == 0 {
            return Err(Error::config("feature_dim must be at least 1"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("hidden widths must be non-empty and positive"));
        }
        if self.layer_index >= 2 * self.hidden.len() {
            return Err(Error::config(format!(
                "layer_index {} is past the last hidden layer",
                self.layer_index
            )));
        }
        let width = self.hidden[self.layer_index / 2];
        if self.feature_dim > width {
            return Err(Error::config(format!(
                "feature_dim {} exceeds layer width {width}",
                self.feature_dim
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda must be finite and non-negative"));
        }
        if let Some(m) = self.margin {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::config("margin must be finite and non-negative"));
            }
        }
        self.adam.validate()
    }

    pub fn resolved_margin(&self) -> f64 {
        self.margin.unwrap_or(2.0 * self.feature_dim as f64)
    }

    pub fn loss_config(&self) -> DpfeLossConfig {
        DpfeLossConfig {
            lambda: self.lambda,
            pair: PairLoss {
                margin: self.resolved_margin(),
                same_term: self.same_term,
            },
            strategy: self.strategy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochTrace {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_pair_loss: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct StageResult<M> {
    pub model: M,
    pub trace: Vec<EpochTrace>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone)]
pub struct StageArtifacts {
    pub original: StageResult<Network>,
    pub simple: StageResult<SplitModel>,
    pub dpfe: StageResult<SplitModel>,
    pub bottleneck_warnings: Vec<Warning>,
}

fn batches(n: usize, batch: usize, seed: u64, tag: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(rng::derive(seed, tag), epoch as u64));
    let mut out: Vec<Vec<usize>> = order.chunks(batch).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        let tail = out.pop().unwrap_or_default();
        if let Some(prev) = out.last_mut() {
            prev.extend(tail);
        }
    }
    out
}

struct Loop<'a> {
    stage: &'static str,
    epochs: usize,
    batch_size: usize,
    adam: AdamConfig,
    seed: u64,
    shuffle_tag: u64,
    rows: usize,
    validation: &'a PrimaryView<'a>,
}

impl Loop<'_> {
    fn run<M: Params>(
        &self,
        model: &mut M,
        step: impl Fn(&M, &[usize], u64) -> Result<LossOutput>,
        mut after_epoch: impl FnMut(&mut M) -> Result<Vec<Warning>>,
        predict: impl Fn(&M, &Tensor2) -> Result<Tensor2>,
    ) -> Result<(Vec<EpochTrace>, Vec<Warning>)> {
        if self.epochs == 0 {
            return Err(Error::config(format!("{} stage needs at least one epoch", self.stage)));
        }
        if self.rows < 2 {
            return Err(Error::config("training split needs at least two samples"));
        }
        let mut state = OptimizerState::new(model.param_count(), self.adam);
        let mut trace = Vec::with_capacity(self.epochs);
        let mut warnings = Vec::new();
        let diverged = |epoch| Error::Diverged {
            stage: self.stage,
            epoch,
        };
        for epoch in 0..self.epochs {
            let mut loss_sum = 0.0;
            let mut pair_sum = 0.0;
            let mut count = 0.0;
            for (b, idx) in batches(self.rows, self.batch_size, self.seed, self.shuffle_tag, epoch)
                .iter()
                .enumerate()
            {
                let step_seed = rng::derive(rng::derive(self.seed, epoch as u64), b as u64);
                let out = step(model, idx, step_seed)?;
                if !out.breakdown.total.is_finite() {
                    return Err(diverged(epoch));
                }
                let w = idx.len() as f64;
                loss_sum += out.breakdown.total * w;
                pair_sum += out.breakdown.sensitive_pair * w;
                count += w;
                train_step(model, &mut state, &out.grads).map_err(|_| diverged(epoch))?;
                warnings.extend(out.warnings);
            }
            warnings.extend(after_epoch(model)?);
            let probs = predict(model, self.validation.x)?;
            trace.push(EpochTrace {
                epoch,
                mean_loss: loss_sum / count,
                mean_pair_loss: pair_sum / count,
                validation_accuracy: accuracy(&probs, self.validation.z),
            });
        }
        Ok((trace, warnings))
    }
}

/// Trains the original classifier `input → [dense → relu]* → dense → softmax`
/// on primary labels only.
pub fn train_original(
    train: &PrimaryView<'_>,
    validation: &PrimaryView<'_>,
    config: &TrainConfig,
) -> Result<StageResult<Network>> {
    config.validate()?;
    let mut model = Network::mlp_classifier(
        train.x.cols(),
        &config.hidden,
        train.classes,
        &mut rng::stream(config.seed, ORIGINAL_INIT),
    );
    let lp = Loop {
        stage: "original",
        epochs: config.epochs.original,
        batch_size: config.batch_size,
        adam: config.adam,
        seed: config.seed,
        shuffle_tag: ORIGINAL_SHUFFLE,
        rows: train.x.rows(),
        validation,
    };
    let (trace, warnings) = lp.run(
        &mut model,
        |m, idx, _| network_primary_loss(m, &train.x.select_rows(idx), &pick(train.z, idx)),
        |_| Ok(Vec::new()),
        |m, x| m.forward(x, Mode::Eval),
    )?;
    Ok(StageResult { model, trace, warnings })
}

fn pick(labels: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| labels[i]).collect()
}

/// Principal directions of a set of activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `width × h`, column `k` is the `k`-th principal direction.
    pub components: Tensor2,
    /// All eigenvalues of the biased covariance, descending.
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    pub fn fit(activations: &Tensor2, h: usize) -> Result<Self> {
        let width = activations.cols();
        if h == 0 || h > width {
            return Err(Error::config(format!("bottleneck width {h} must lie in 1..={width}")));
        }
        let eig = symmetric_eigen(&covariance(activations)?)?;
        let mut components = Tensor2::zeros(width, h);
        for k in 0..h {
            for i in 0..width {
                components.set(i, k, eig.vectors.get(i, k));
            }
        }
        Ok(Pca {
            mean: activations.column_means(),
            components,
            eigenvalues: eig.values,
        })
    }

    pub fn width(&self) -> usize {
        self.components.rows()
    }

    pub fn rank(&self) -> usize {
        self.components.cols()
    }

    pub fn encode(&self, x: &Tensor2) -> Tensor2 {
        let mut out = Tensor2::zeros(x.rows(), self.rank());
        for (r, row) in x.row_iter().enumerate() {
            for k in 0..self.rank() {
                let v: f64 = (0..self.width())
                    .map(|i| (row[i] - self.mean[i]) * self.components.get(i, k))
                    .sum();
                out.set(r, k, v);
            }
        }
        out
    }

    pub fn reconstruct(&self, x: &Tensor2) -> Tensor2 {
        let codes = self.encode(x);
        let mut out = Tensor2::zeros(x.rows(), self.width());
        for r in 0..x.rows() {
            for i in 0..self.width() {
                let v: f64 = (0..self.rank())
                    .map(|k| codes.get(r, k) * self.components.get(i, k))
                    .sum();
                out.set(r, i, self.mean[i] + v);
            }
        }
        out
    }
}

/// Inserts a PCA-initialized linear bottleneck of width `h` after
/// `layer_index` and splits the network there.
///
/// The extractor is `layers[..=layer_index] → encode → standardize`. The
/// decoder (`diag(sd) · Vᵀ` plus the mean terms) is folded into the next dense
/// layer when there is one, so the predictor reads the code directly;
/// otherwise it stays as an explicit dense layer.
pub fn pca_bottleneck_embed(
    original: &Network,
    layer_index: usize,
    h: usize,
    train_x: &Tensor2,
) -> Result<(SplitModel, Vec<Warning>)> {
    let layers = original.layers();
    if layer_index + 1 >= layers.len() {
        return Err(Error::config(format!(
            "layer_index {layer_index} leaves no predictor ({} layers)",
            layers.len()
        )));
    }
    let width = layers[layer_index].out_dim();
    if h == 0 || h > width {
        return Err(Error::config(format!("feature_dim {h} must lie in 1..={width}")));
    }
    let acts = original.forward_range(train_x, 0, layer_index + 1, Mode::Eval)?;
    let pca = Pca::fit(&acts, h)?;
    let mut warnings = Vec::new();
    let scale = pca.eigenvalues.first().copied().unwrap_or(0.0).max(1.0);
    let degenerate = pca.eigenvalues[..h].iter().filter(|&&l| l <= 1e-12 * scale).count();
    if degenerate > 0 {
        warnings.push(Warning::DegenerateCovariance { directions: degenerate });
    }

    let mut enc_w = vec![0.0; width * h];
    let mut enc_b = vec![0.0; h];
    for k in 0..h {
        for i in 0..width {
            let v = pca.components.get(i, k);
            enc_w[i * h + k] = v;
            enc_b[k] -= pca.mean[i] * v;
        }
    }
    let encoder = Dense::new(width, h, enc_w, enc_b)?;
    let codes = {
        let m = Network::new(vec![Layer::Dense(encoder.clone())])?;
        m.forward(&acts, Mode::Eval)?
    };
    let (standardize, std_warnings) = Standardize::fit(&codes)?;
    warnings.extend(std_warnings);

    // Standardized code s reconstructs the activation as s·D + c.
    let mut dec_w = vec![0.0; h * width];
    let mut dec_b = pca.mean.clone();
    for k in 0..h {
        let sd = if standardize.var[k] >= VARIANCE_FLOOR {
            math::sqrt(standardize.var[k])
        } else {
            0.0
        };
        for i in 0..width {
            let v = pca.components.get(i, k);
            dec_w[k * width + i] = sd * v;
            dec_b[i] += standardize.mean[k] * v;
        }
    }

    let mut ext_layers: Vec<Layer> = layers[..=layer_index].to_vec();
    ext_layers.push(Layer::Dense(encoder));
    ext_layers.push(Layer::Standardize(standardize));

    let mut rest: Vec<Layer> = layers[layer_index + 1..].to_vec();
    let mut pred_layers = Vec::with_capacity(rest.len() + 1);
    match rest.first_mut() {
        Some(Layer::Dense(next)) => {
            let out = next.out_dim;
            let mut w = vec![0.0; h * out];
            for k in 0..h {
                for o in 0..out {
                    w[k * out + o] = (0..width).map(|i| dec_w[k * width + i] * next.weight(i, o)).sum();
                }
            }
            let mut b = next.bias.clone();
            for (o, bo) in b.iter_mut().enumerate() {
                *bo += (0..width).map(|i| dec_b[i] * next.weight(i, o)).sum::<f64>();
            }
            *next = Dense::new(h, out, w, b)?;
        }
        _ => pred_layers.push(Layer::Dense(Dense::new(h, width, dec_w, dec_b)?)),
    }
    pred_layers.extend(rest);
    let model = SplitModel::new(Network::new(ext_layers)?, Network::new(pred_layers)?)?;
    Ok((model, warnings))
}

fn fine_tune(
    model: &mut SplitModel,
    stage: &'static str,
    epochs: usize,
    x: &Tensor2,
    validation: &PrimaryView<'_>,
    config: &TrainConfig,
    step: impl Fn(&SplitModel, &[usize], u64) -> Result<LossOutput>,
) -> Result<(Vec<EpochTrace>, Vec<Warning>)> {
    let lp = Loop {
        stage,
        epochs,
        batch_size: config.batch_size,
        adam: config.adam,
        seed: config.seed,
        shuffle_tag: FINE_TUNE_SHUFFLE,
        rows: x.rows(),
        validation,
    };
    lp.run(
        model,
        step,
        |m| m.refresh_statistics(x),
        |m, vx| Ok(m.forward_eval(vx)?.1),
    )
}

/// Fine-tunes a bottlenecked model on the primary loss; no sensitive labels
/// are involved.
pub fn train_simple(
    embedded: SplitModel,
    train: &PrimaryView<'_>,
    validation: &PrimaryView<'_>,
    config: &TrainConfig,
) -> Result<StageResult<SplitModel>> {
    config.validate()?;
    let mut model = embedded;
    let (trace, warnings) = fine_tune(
        &mut model,
        "simple",
        config.epochs.simple,
        train.x,
        validation,
        config,
        |m, idx, _| split_primary_loss(m, &train.x.select_rows(idx), &pick(train.z, idx)),
    )?;
    Ok(StageResult { model, trace, warnings })
}

/// Fine-tunes with the primary loss plus `λ` times the pairwise sensitive
/// term. With `λ = 0` this follows the same trajectory as [`train_simple`].
pub fn train_dpfe(
    simple: SplitModel,
    train: &Dataset,
    validation: &Dataset,
    config: &TrainConfig,
) -> Result<StageResult<SplitModel>> {
    config.validate()?;
    let loss = config.loss_config();
    let mut model = simple;
    let view = validation.primary_view();
    let (trace, warnings) = fine_tune(
        &mut model,
        "dpfe",
        config.epochs.dpfe,
        train.x(),
        &view,
        config,
        |m, idx, seed| {
            dpfe_total_loss(
                m,
                &train.x().select_rows(idx),
                &pick(train.z(), idx),
                &pick(train.y(), idx),
                &loss,
                rng::derive(seed, PAIR_TAG),
            )
        },
    )?;
    Ok(StageResult { model, trace, warnings })
}

/// Runs all three stages on a train/validation split.
pub fn run_pipeline(train: &Dataset, validation: &Dataset, config: &TrainConfig) -> Result<StageArtifacts> {
    config.validate()?;
    let original = train_original(&train.primary_view(), &validation.primary_view(), config)?;
    let (embedded, bottleneck_warnings) =
        pca_bottleneck_embed(&original.model, config.layer_index, config.feature_dim, train.x())?;
    let simple = train_simple(embedded, &train.primary_view(), &validation.primary_view(), config)?;
    let dpfe = train_dpfe(simple.model.clone(), train, validation, config)?;
    Ok(StageArtifacts {
        original,
        simple,
        dpfe,
        bottleneck_warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_two_factor, split_dataset, SplitFractions, TwoFactorConfig};

    fn small() -> (Dataset, Dataset) {
        let cfg = TwoFactorConfig {
            samples: 200,
            sensitive_classes: 5,
            ..TwoFactorConfig::default()
        };
        let data = generate_two_factor(&cfg, 3).unwrap();
        let s = split_dataset(&data, &SplitFractions::default(), 3).unwrap();
        (s.train, s.validation)
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs: StageEpochs {
                original: 2,
                simple: 2,
                dpfe: 2,
            },
            hidden: vec![16, 16],
            feature_dim: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_rejected() {
        let (train, val) = small();
        let mut cfg = quick();
        cfg.epochs.original = 0;
        let err = train_original(&train.primary_view(), &val.primary_view(), &cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn feature_dim_wider_than_layer_rejected() {
        let mut cfg = quick();
        cfg.feature_dim = 17;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn final_batch_of_one_is_merged() {
        let b = batches(65, 64, 1, 2, 0);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].len(), 65);
        let b = batches(129, 64, 1, 2, 0);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![64, 65]);
    }

    #[test]
    fn full_width_bottleneck_preserves_outputs() {
        let (train, _) = small();
        let cfg = quick();
        let m0 = train_original(&train.primary_view(), &train.primary_view(), &cfg)
            .unwrap()
            .model;
        let (m1, _) = pca_bottleneck_embed(&m0, 3, 16, train.x()).unwrap();
        let a = m0.forward(train.x(), Mode::Eval).unwrap();
        let (_, b) = m1.forward_eval(train.x()).unwrap();
        for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn explicit_decoder_when_next_layer_is_not_dense() {
        let (train, _) = small();
        let cfg = quick();
        let m0 = train_original(&train.primary_view(), &train.primary_view(), &cfg)
            .unwrap()
            .model;
        let (m1, _) = pca_bottleneck_embed(&m0, 2, 16, train.x()).unwrap();
        assert_eq!(m1.predictor().layers()[0].kind(), "dense");
        assert_eq!(m1.predictor().layers()[1].kind(), "relu");
        let a = m0.forward(train.x(), Mode::Eval).unwrap();
        let (_, b) = m1.forward_eval(train.x()).unwrap();
        for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn dpfe_without_pair_weight_matches_simple() {
        let (train, val) = small();
        let mut cfg = quick();
        cfg.lambda = 0.0;
        cfg.epochs.dpfe = cfg.epochs.simple;
        let m0 = train_original(&train.primary_view(), &val.primary_view(), &cfg)
            .unwrap()
            .model;
        let (m1, _) = pca_bottleneck_embed(&m0, 3, 4, train.x()).unwrap();
        let a = train_simple(m1.clone(), &train.primary_view(), &val.primary_view(), &cfg).unwrap();
        let b = train_dpfe(m1, &train, &val, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        let la: Vec<f64> = a.trace.iter().map(|t| t.mean_loss).collect();
        let lb: Vec<f64> = b.trace.iter().map(|t| t.mean_loss).collect();
        assert_eq!(la, lb);
        assert_eq!(a.trace.len(), cfg.epochs.simple);
    }
}
