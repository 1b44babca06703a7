//! Dense network substrate: layers, forward evaluation with traces, and
//! reverse-mode gradients.
//!
//! A [`Network`] is a plain layer sequence. A [`SplitModel`] pairs an
//! extractor network (ending in a standardization layer, whose output is the
//! private feature) with a predictor network ending in softmax.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result, Warning};
use crate::math;
use crate::rng::Rng;
use crate::tensor::Tensor2;

/// Variances below this are treated as constant dimensions.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `in_dim × out_dim`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::shape("dense layer with zero width"));
        }
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::shape(format!(
                "dense {in_dim}->{out_dim} needs {} weights and {out_dim} biases, got {} and {}",
                in_dim * out_dim,
                weights.len(),
                bias.len()
            )));
        }
        Ok(Dense {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut layer = Dense::zeros(dim, dim);
        for i in 0..dim {
            layer.weights[i * dim + i] = 1.0;
        }
        layer
    }

    /// He-uniform weights, zero bias.
    pub fn random(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let limit = math::sqrt(6.0 / in_dim as f64);
        let weights = (0..in_dim * out_dim).map(|_| rng.random_range(-limit..limit)).collect();
        Dense {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.out_dim + j]
    }
}

/// Per-dimension shift/scale with frozen statistics.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Standardize {
    pub mean: Vec<f64>,
    /// Biased (divide-by-N) variance.
    pub var: Vec<f64>,
}

impl Standardize {
    pub fn identity(dim: usize) -> Self {
        Standardize {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Fits mean and biased variance per column.
    pub fn fit(features: &Tensor2) -> Result<(Self, Vec<Warning>)> {
        if features.rows() < 2 {
            return Err(Error::shape("standardization needs at least two rows"));
        }
        let mean = features.column_means();
        let var = features.column_variances();
        let warnings = var
            .iter()
            .enumerate()
            .filter(|(_, &v)| v < VARIANCE_FLOOR)
            .map(|(dim, &variance)| Warning::DegenerateDimension { dim, variance })
            .collect();
        Ok((Standardize { mean, var }, warnings))
    }

    /// `1/sqrt(var)`, or zero for degenerate dimensions.
    pub fn inv_std(&self) -> Vec<f64> {
        self.var.iter().map(|&v| inverse_std(v)).collect()
    }

    pub fn apply(&self, x: &Tensor2) -> Tensor2 {
        let inv = self.inv_std();
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&inv) {
                *v = (*v - m) * s;
            }
        }
        out
    }
}

#[inline]
fn inverse_std(var: f64) -> f64 {
    if var < VARIANCE_FLOOR {
        0.0
    } else {
        1.0 / math::sqrt(var)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Layer {
    Dense(Dense),
    Relu { dim: usize },
    Standardize(Standardize),
    Softmax { dim: usize },
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        match self {
            Layer::Dense(d) => d.in_dim,
            Layer::Relu { dim } | Layer::Softmax { dim } => *dim,
            Layer::Standardize(s) => s.dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Layer::Dense(d) => d.out_dim,
            other => other.in_dim(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weights.len() + d.bias.len(),
            _ => 0,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Relu { .. } => "relu",
            Layer::Standardize(_) => "standardize",
            Layer::Softmax { .. } => "softmax",
        }
    }
}

/// Whether standardization layers use batch or stored statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Flat parameter access shared by networks and split models.
pub trait Params {
    fn param_count(&self) -> usize;
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(usize, &mut f64));

    fn params(&self) -> Vec<f64>;

    fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        self.for_each_param_mut(&mut |i, p| *p = values[i]);
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Cache {
    None,
    Standardize { normalized: Tensor2, inv_std: Vec<f64> },
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `inputs[i]` is the input of layer `i`; the last entry is the output.
    activations: Vec<Tensor2>,
    caches: Vec<Cache>,
    mode: Mode,
}

impl Trace {
    pub fn output(&self) -> &Tensor2 {
        self.activations.last().expect("trace has an output")
    }

    pub fn input_of(&self, layer: usize) -> &Tensor2 {
        &self.activations[layer]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("network without layers"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Network { layers })
    }

    /// `input → [dense(w) → relu]* → dense(classes) → softmax`.
    pub fn mlp_classifier(input: usize, hidden: &[usize], classes: usize, rng: &mut Rng) -> Self {
        let mut layers = Vec::new();
        let mut width = input;
        for &h in hidden {
            layers.push(Layer::Dense(Dense::random(width, h, rng)));
            layers.push(Layer::Relu { dim: h });
            width = h;
        }
        layers.push(Layer::Dense(Dense::random(width, classes, rng)));
        layers.push(Layer::Softmax { dim: classes });
        Network { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn forward(&self, x: &Tensor2, mode: Mode) -> Result<Tensor2> {
        self.forward_range(x, 0, self.layers.len(), mode)
    }

    /// Runs layers `start..end` only.
    pub fn forward_range(&self, x: &Tensor2, start: usize, end: usize, mode: Mode) -> Result<Tensor2> {
        if start == end {
            return Ok(x.clone());
        }
        self.check_input(x, start)?;
        let mut current = x.clone();
        for layer in &self.layers[start..end] {
            current = apply_layer(layer, &current, mode)?.0;
        }
        Ok(current)
    }

    fn check_input(&self, x: &Tensor2, layer: usize) -> Result<()> {
        let expected = self.layers[layer].in_dim();
        if x.cols() != expected {
            return Err(Error::shape(format!(
                "input has {} columns, layer {layer} expects {expected}",
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn forward_traced(&self, x: &Tensor2, mode: Mode) -> Result<Trace> {
        self.check_input(x, 0)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        activations.push(x.clone());
        for layer in &self.layers {
            let (out, cache) = apply_layer(layer, activations.last().unwrap(), mode)?;
            activations.push(out);
            caches.push(cache);
        }
        Ok(Trace {
            activations,
            caches,
            mode,
        })
    }

    /// Returns the flat parameter gradient and the gradient w.r.t. the input.
    pub fn backward(&self, trace: &Trace, grad_output: &Tensor2) -> (Vec<f64>, Tensor2) {
        let mut grads = vec![0.0; self.param_count()];
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for layer in &self.layers {
            offsets.push(acc);
            acc += layer.param_count();
        }

        let mut g = grad_output.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.activations[i];
            let output = &trace.activations[i + 1];
            g = match layer {
                Layer::Dense(d) => {
                    let slot = &mut grads[offsets[i]..offsets[i] + layer.param_count()];
                    let (gw, gb) = slot.split_at_mut(d.weights.len());
                    let mut gin = Tensor2::zeros(g.rows(), d.in_dim);
                    for r in 0..g.rows() {
                        let gr = g.row(r);
                        let xr = input.row(r);
                        for (b, &gv) in gb.iter_mut().zip(gr) {
                            *b += gv;
                        }
                        let gi = gin.row_mut(r);
                        for k in 0..d.in_dim {
                            let wrow = &d.weights[k * d.out_dim..(k + 1) * d.out_dim];
                            let gwrow = &mut gw[k * d.out_dim..(k + 1) * d.out_dim];
                            let xv = xr[k];
                            let mut s = 0.0;
                            for j in 0..d.out_dim {
                                gwrow[j] += xv * gr[j];
                                s += wrow[j] * gr[j];
                            }
                            gi[k] = s;
                        }
                    }
                    gin
                }
                Layer::Relu { .. } => {
                    let mut gin = g.clone();
                    for (gv, &xv) in gin.as_mut_slice().iter_mut().zip(input.as_slice()) {
                        if xv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    gin
                }
                Layer::Softmax { .. } => {
                    let mut gin = g.clone();
                    for r in 0..g.rows() {
                        let p = output.row(r);
                        let dot: f64 = p.iter().zip(g.row(r)).map(|(a, b)| a * b).sum();
                        for (j, v) in gin.row_mut(r).iter_mut().enumerate() {
                            *v = p[j] * (*v - dot);
                        }
                    }
                    gin
                }
                Layer::Standardize(_) => match (&trace.caches[i], trace.mode) {
                    (Cache::Standardize { normalized, inv_std }, Mode::Train) => {
                        standardize_backward_batch(&g, normalized, inv_std)
                    }
                    (Cache::Standardize { inv_std, .. }, Mode::Eval) => {
                        let mut gin = g.clone();
                        for r in 0..gin.rows() {
                            for (v, s) in gin.row_mut(r).iter_mut().zip(inv_std) {
                                *v *= s;
                            }
                        }
                        gin
                    }
                    (Cache::None, _) => unreachable!("standardize layer always caches"),
                },
            };
        }
        (grads, g)
    }

    /// Smallest |pre-activation| seen by any ReLU in the trace.
    pub fn relu_margin(&self, trace: &Trace) -> f64 {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Relu { .. }))
            .flat_map(|(i, _)| trace.activations[i].as_slice().iter().map(|v| math::abs(*v)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Refits every standardization layer on the activations it receives
    /// from `x` (earlier layers evaluated with their refreshed statistics).
    pub fn refresh_statistics(&mut self, x: &Tensor2) -> Result<Vec<Warning>> {
        self.check_input(x, 0)?;
        let mut warnings = Vec::new();
        let mut current = x.clone();
        for layer in self.layers.iter_mut() {
            if let Layer::Standardize(s) = layer {
                let (fitted, w) = Standardize::fit(&current)?;
                *s = fitted;
                warnings.extend(w);
            }
            current = apply_layer(layer, &current, Mode::Eval)?.0;
        }
        Ok(warnings)
    }
}

impl Params for Network {
    fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            if let Layer::Dense(d) = layer {
                out.extend_from_slice(&d.weights);
                out.extend_from_slice(&d.bias);
            }
        }
        out
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(usize, &mut f64)) {
        let mut idx = 0;
        for layer in self.layers.iter_mut() {
            if let Layer::Dense(d) = layer {
                for p in d.weights.iter_mut().chain(d.bias.iter_mut()) {
                    f(idx, p);
                    idx += 1;
                }
            }
        }
    }
}

fn apply_layer(layer: &Layer, x: &Tensor2, mode: Mode) -> Result<(Tensor2, Cache)> {
    let (out, cache) = match layer {
        Layer::Dense(d) => (x.affine(&d.weights, &d.bias, d.out_dim), Cache::None),
        Layer::Relu { .. } => (x.map(|v| if v > 0.0 { v } else { 0.0 }), Cache::None),
        Layer::Softmax { .. } => (softmax_rows(x), Cache::None),
        Layer::Standardize(s) => {
            let stats;
            let used = match mode {
                Mode::Eval => s,
                Mode::Train => {
                    if x.rows() < 2 {
                        return Err(Error::shape("batch standardization needs at least two rows"));
                    }
                    stats = Standardize {
                        mean: x.column_means(),
                        var: x.column_variances(),
                    };
                    &stats
                }
            };
            let normalized = used.apply(x);
            let inv_std = used.inv_std();
            (normalized.clone(), Cache::Standardize { normalized, inv_std })
        }
    };
    if !out.is_finite() {
        return Err(Error::numeric(format!("non-finite {} activation", layer.kind())));
    }
    Ok((out, cache))
}

/// Batch-statistics standardization backward pass (biased variance).
fn standardize_backward_batch(g: &Tensor2, normalized: &Tensor2, inv_std: &[f64]) -> Tensor2 {
    let n = g.rows() as f64;
    let cols = g.cols();
    let mut sum_g = vec![0.0; cols];
    let mut sum_gy = vec![0.0; cols];
    for r in 0..g.rows() {
        for j in 0..cols {
            sum_g[j] += g.get(r, j);
            sum_gy[j] += g.get(r, j) * normalized.get(r, j);
        }
    }
    let mut gin = Tensor2::zeros(g.rows(), cols);
    for r in 0..g.rows() {
        for j in 0..cols {
            let v = inv_std[j] / n * (n * g.get(r, j) - sum_g[j] - normalized.get(r, j) * sum_gy[j]);
            gin.set(r, j, v);
        }
    }
    gin
}

pub fn softmax_rows(x: &Tensor2) -> Tensor2 {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = math::exp(*v - max);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(probs: &Tensor2, labels: &[usize]) -> f64 {
    let hits = probs
        .row_iter()
        .zip(labels)
        .filter(|(row, &z)| argmax(row) == z)
        .count();
    hits as f64 / labels.len() as f64
}

/// Extractor `g(x; θ)` followed by predictor `q(z | f; φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitModel {
    extractor: Network,
    predictor: Network,
}

impl SplitModel {
    pub fn new(extractor: Network, predictor: Network) -> Result<Self> {
        if !matches!(extractor.layers().last(), Some(Layer::Standardize(_))) {
            return Err(Error::shape("extractor must end in a standardize layer"));
        }
        if !matches!(predictor.layers().last(), Some(Layer::Softmax { .. })) {
            return Err(Error::shape("predictor must end in softmax"));
        }
        if extractor.output_dim() != predictor.input_dim() {
            return Err(Error::shape(format!(
                "extractor emits {} features, predictor expects {}",
                extractor.output_dim(),
                predictor.input_dim()
            )));
        }
        Ok(SplitModel { extractor, predictor })
    }

    /// Random model `input → [dense → relu]* → dense(feature) → standardize | [dense → relu]* → dense(classes) → softmax`.
    pub fn random(
        input: usize,
        extractor_hidden: &[usize],
        feature_dim: usize,
        predictor_hidden: &[usize],
        classes: usize,
        rng: &mut Rng,
    ) -> Self {
        let mut layers = Vec::new();
        let mut width = input;
        for &h in extractor_hidden {
            layers.push(Layer::Dense(Dense::random(width, h, rng)));
            layers.push(Layer::Relu { dim: h });
            width = h;
        }
        layers.push(Layer::Dense(Dense::random(width, feature_dim, rng)));
        layers.push(Layer::Standardize(Standardize::identity(feature_dim)));
        let extractor = Network { layers };
        let predictor = Network::mlp_classifier(feature_dim, predictor_hidden, classes, rng);
        SplitModel { extractor, predictor }
    }

    pub fn extractor(&self) -> &Network {
        &self.extractor
    }

    pub fn predictor(&self) -> &Network {
        &self.predictor
    }

    pub fn extractor_mut(&mut self) -> &mut Network {
        &mut self.extractor
    }

    pub fn predictor_mut(&mut self) -> &mut Network {
        &mut self.predictor
    }

    pub fn into_parts(self) -> (Network, Network) {
        (self.extractor, self.predictor)
    }

    pub fn input_dim(&self) -> usize {
        self.extractor.input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.extractor.output_dim()
    }

    pub fn primary_classes(&self) -> usize {
        self.predictor.output_dim()
    }

    /// Number of extractor (θ) parameters; they precede φ in the flat layout.
    pub fn extractor_param_count(&self) -> usize {
        self.extractor.param_count()
    }

    pub fn extract(&self, x: &Tensor2) -> Result<Tensor2> {
        self.extractor.forward(x, Mode::Eval)
    }

    pub fn predict(&self, features: &Tensor2) -> Result<Tensor2> {
        self.predictor.forward(features, Mode::Eval)
    }

    /// Evaluation-mode pass returning `(features, primary_probs)`.
    pub fn forward_eval(&self, x: &Tensor2) -> Result<(Tensor2, Tensor2)> {
        let features = self.extract(x)?;
        let probs = self.predict(&features)?;
        Ok((features, probs))
    }

    pub fn refresh_statistics(&mut self, x: &Tensor2) -> Result<Vec<Warning>> {
        let mut warnings = self.extractor.refresh_statistics(x)?;
        if self
            .predictor
            .layers()
            .iter()
            .any(|l| matches!(l, Layer::Standardize(_)))
        {
            let f = self.extract(x)?;
            warnings.extend(self.predictor.refresh_statistics(&f)?);
        }
        Ok(warnings)
    }
}

impl Params for SplitModel {
    fn param_count(&self) -> usize {
        self.extractor.param_count() + self.predictor.param_count()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.extractor.params();
        p.extend(self.predictor.params());
        p
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(usize, &mut f64)) {
        let offset = self.extractor.param_count();
        self.extractor.for_each_param_mut(f);
        self.predictor.for_each_param_mut(&mut |i, p| f(offset + i, p));
    }
}
