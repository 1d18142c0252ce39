//! Encoder-decoder regressor trained with Adam, and a gradient-ascent parameter tuner.
//!
//! Features for the session task are `[log10 n_initial, attempt_index, qber_est]`,
//! targets `[qber_true, final_key_len / n_initial]`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

pub const DEFAULT_HIDDEN: [usize; 3] = [32, 8, 32];
pub const SESSION_FEATURES: usize = 3;
pub const SESSION_TARGETS: usize = 2;
/// Floor on |true| in the relative accuracy band.
pub const ACCURACY_FLOOR: f64 = 0.01;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

pub type Sample = (Vec<f64>, Vec<f64>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Normalizer { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Per-column mean and population standard deviation; constant columns get scale 1.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Self {
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for row in rows {
            n += 1;
            for j in 0..dim {
                let d = row[j] - mean[j];
                mean[j] += d / n as f64;
                m2[j] += d * (row[j] - mean[j]);
            }
        }
        let scale = m2
            .iter()
            .map(|&s| {
                let sd = if n > 0 { (s / n as f64).sqrt() } else { 0.0 };
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Normalizer { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| v * s + m).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l1_lambda: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Epochs of input-reconstruction pre-training for the encoder half; 0 disables it.
    pub pretrain_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            epochs: 100,
            batch_size: 64,
            l1_lambda: 0.0,
            seed: 0,
            hidden: DEFAULT_HIDDEN.to_vec(),
            pretrain_epochs: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be at least 1"));
        }
        if !(self.l1_lambda.is_finite() && self.l1_lambda >= 0.0) {
            return Err(Error::param("l1_lambda", "must be non-negative"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::param("hidden", "layer sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    pub layer_sizes: Vec<usize>,
    /// Layer l is (size_{l+1} x size_l), row-major.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input_norm: Normalizer,
    pub target_norm: Normalizer,
    /// Predictions are clamped to the target range seen in training.
    pub target_range: Option<Vec<[f64; 2]>>,
    pub config: Option<TrainConfig>,
    pub loss_trace: Vec<TrainingRecord>,
}

pub fn init_model(layer_sizes: &[usize], seed: u64) -> Result<AutoencoderModel> {
    if layer_sizes.len() < 2 {
        return Err(Error::param("layer_sizes", "need at least an input and an output layer"));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::param("layer_sizes", "sizes must be positive"));
    }
    let mut rng = stream(seed, Stream::ModelInit);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        weights.push((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect());
        biases.push(vec![0.0; fan_out]);
    }
    Ok(AutoencoderModel {
        layer_sizes: layer_sizes.to_vec(),
        weights,
        biases,
        input_norm: Normalizer::identity(layer_sizes[0]),
        target_norm: Normalizer::identity(*layer_sizes.last().unwrap()),
        target_range: None,
        config: None,
        loss_trace: Vec::new(),
    })
}

/// Gradients with the same layout as the model parameters.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &AutoencoderModel) -> Self {
        Gradients {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b.iter()).copied()).collect()
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let n_in = x.len();
    out.clear();
    out.extend(b.iter().enumerate().map(|(r, &bias)| {
        let row = &w[r * n_in..(r + 1) * n_in];
        bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }));
}

impl AutoencoderModel {
    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn is_trained(&self) -> bool {
        !self.loss_trace.is_empty()
    }

    /// Network output on already-normalized input.
    pub fn forward_normalized(&self, z: &[f64]) -> Vec<f64> {
        let mut a = z.to_vec();
        let mut next = Vec::new();
        let last = self.n_layers() - 1;
        for l in 0..=last {
            affine(&self.weights[l], &self.biases[l], &a, &mut next);
            if l < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut a, &mut next);
        }
        a
    }

    /// Prediction in target units.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: features.len() });
        }
        let out = self.target_norm.denormalize(&self.forward_normalized(&self.input_norm.normalize(features)));
        Ok(match &self.target_range {
            Some(range) => out.iter().zip(range).map(|(v, [lo, hi])| v.clamp(*lo, *hi)).collect(),
            None => out,
        })
    }

    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.forward(r)).collect()
    }

    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().flatten().map(|w| w.abs()).sum()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().zip(&self.biases).map(|(w, b)| w.len() + b.len()).sum()
    }

    fn locate_param(&self, mut i: usize) -> (usize, bool, usize) {
        for l in 0..self.n_layers() {
            if i < self.weights[l].len() {
                return (l, true, i);
            }
            i -= self.weights[l].len();
            if i < self.biases[l].len() {
                return (l, false, i);
            }
            i -= self.biases[l].len();
        }
        panic!("parameter index out of range");
    }

    /// Flat parameter access, ordered layer by layer (weights then biases).
    pub fn param(&self, i: usize) -> f64 {
        match self.locate_param(i) {
            (l, true, j) => self.weights[l][j],
            (l, false, j) => self.biases[l][j],
        }
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        match self.locate_param(i) {
            (l, true, j) => self.weights[l][j] = v,
            (l, false, j) => self.biases[l][j] = v,
        }
    }

    /// Mean over samples and outputs of squared error on normalized data, plus λ·Σ|W|.
    pub fn batch_loss(&self, batch: &[Sample], l1_lambda: f64) -> f64 {
        let k = self.output_dim() as f64;
        let mse = batch
            .iter()
            .map(|(x, y)| self.forward_normalized(x).iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>())
            .sum::<f64>()
            / (batch.len() as f64 * k);
        mse + l1_lambda * self.l1_norm()
    }

    /// Backpropagation on normalized data. Returns the MSE part of the loss and the full gradient.
    pub fn loss_and_gradient(&self, batch: &[Sample], l1_lambda: f64) -> (f64, Gradients) {
        let n_layers = self.n_layers();
        let mut grad = Gradients::zeros_like(self);
        let scale = 2.0 / (batch.len() as f64 * self.output_dim() as f64);
        let mut mse = 0.0;
        let mut acts: Vec<Vec<f64>> = vec![Vec::new(); n_layers + 1];
        for (x, y) in batch {
            acts[0].clone_from(x);
            for l in 0..n_layers {
                let (before, after) = acts.split_at_mut(l + 1);
                affine(&self.weights[l], &self.biases[l], &before[l], &mut after[0]);
                if l + 1 < n_layers {
                    after[0].iter_mut().for_each(|v| *v = v.max(0.0));
                }
            }
            let mut delta: Vec<f64> = acts[n_layers].iter().zip(y).map(|(p, t)| p - t).collect();
            mse += delta.iter().map(|d| d * d).sum::<f64>();
            delta.iter_mut().for_each(|d| *d *= scale);
            for l in (0..n_layers).rev() {
                let input = &acts[l];
                let n_in = input.len();
                let gw = &mut grad.weights[l];
                for (r, &d) in delta.iter().enumerate() {
                    grad.biases[l][r] += d;
                    if d != 0.0 {
                        gw[r * n_in..(r + 1) * n_in].iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                    }
                }
                if l > 0 {
                    let w = &self.weights[l];
                    let mut prev = vec![0.0; n_in];
                    for (r, &d) in delta.iter().enumerate() {
                        if d != 0.0 {
                            prev.iter_mut().zip(&w[r * n_in..(r + 1) * n_in]).for_each(|(p, wv)| *p += d * wv);
                        }
                    }
                    // ReLU derivative: post-activation value > 0.
                    prev.iter_mut().zip(input).for_each(|(p, a)| {
                        if *a <= 0.0 {
                            *p = 0.0
                        }
                    });
                    delta = prev;
                }
            }
        }
        if l1_lambda > 0.0 {
            for (gw, w) in grad.weights.iter_mut().zip(&self.weights) {
                gw.iter_mut().zip(w).for_each(|(g, wv)| *g += l1_lambda * wv.signum() * (*wv != 0.0) as u8 as f64);
            }
        }
        (mse / (batch.len() as f64 * self.output_dim() as f64), grad)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: AutoencoderModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::malformed("model", reason));
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return bad("layer sizes must list at least two positive counts".into());
        }
        if self.weights.len() != self.layer_sizes.len() - 1 || self.biases.len() != self.weights.len() {
            return bad("layer count does not match layer sizes".into());
        }
        for (l, pair) in self.layer_sizes.windows(2).enumerate() {
            if self.weights[l].len() != pair[0] * pair[1] || self.biases[l].len() != pair[1] {
                return bad(format!("layer {l} has the wrong shape"));
            }
        }
        if self.input_norm.dim() != self.input_dim()
            || self.input_norm.scale.len() != self.input_dim()
            || self.target_norm.dim() != self.output_dim()
            || self.target_norm.scale.len() != self.output_dim()
        {
            return bad("normalization stats do not match layer sizes".into());
        }
        if self.input_norm.scale.iter().chain(&self.target_norm.scale).any(|s| *s == 0.0) {
            return bad("zero normalization scale".into());
        }
        if let Some(range) = &self.target_range {
            if range.len() != self.output_dim() || range.iter().any(|[lo, hi]| lo > hi) {
                return bad("invalid target range".into());
            }
        }
        let finite = self
            .weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .chain(&self.input_norm.mean)
            .chain(&self.input_norm.scale)
            .chain(&self.target_norm.mean)
            .chain(&self.target_norm.scale)
            .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite parameter".into());
        }
        Ok(())
    }
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl Adam {
    fn new(model: &AutoencoderModel) -> Self {
        Adam { m: Gradients::zeros_like(model), v: Gradients::zeros_like(model), t: 0 }
    }

    fn step(&mut self, model: &mut AutoencoderModel, grad: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        };
        for l in 0..model.n_layers() {
            update(&mut model.weights[l], &grad.weights[l], &mut self.m.weights[l], &mut self.v.weights[l]);
            update(&mut model.biases[l], &grad.biases[l], &mut self.m.biases[l], &mut self.v.biases[l]);
        }
    }
}

/// Runs mini-batch Adam on normalized samples; epoch loss is the sample-weighted mean of batch MSEs.
fn fit(model: &mut AutoencoderModel, data: &[Sample], config: &TrainConfig, shuffle_seed: u64) -> Result<Vec<TrainingRecord>> {
    let mut adam = Adam::new(model);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = stream(shuffle_seed, Stream::Shuffle);
    let mut trace = Vec::with_capacity(config.epochs);
    let mut batch: Vec<Sample> = Vec::with_capacity(config.batch_size);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let (mse, grad) = model.loss_and_gradient(&batch, config.l1_lambda);
            total += mse * chunk.len() as f64;
            adam.step(model, &grad, config.learning_rate);
        }
        let loss = total / data.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        trace.push(TrainingRecord { epoch, loss });
    }
    Ok(trace)
}

pub fn train(data: &[Sample], config: &TrainConfig) -> Result<(AutoencoderModel, Vec<TrainingRecord>)> {
    config.validate()?;
    let (first_x, first_y) = data.first().ok_or_else(|| Error::param("dataset", "is empty"))?;
    let (d_in, d_out) = (first_x.len(), first_y.len());
    if d_in == 0 || d_out == 0 {
        return Err(Error::param("dataset", "features and targets must be non-empty"));
    }
    for (x, y) in data {
        if x.len() != d_in {
            return Err(Error::DimensionMismatch { expected: d_in, actual: x.len() });
        }
        if y.len() != d_out {
            return Err(Error::DimensionMismatch { expected: d_out, actual: y.len() });
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training sample".into()));
        }
    }
    let input_norm = Normalizer::fit(data.iter().map(|(x, _)| x.as_slice()), d_in);
    let target_norm = Normalizer::fit(data.iter().map(|(_, y)| y.as_slice()), d_out);
    let normalized: Vec<Sample> =
        data.iter().map(|(x, y)| (input_norm.normalize(x), target_norm.normalize(y))).collect();

    let mut sizes = vec![d_in];
    sizes.extend(&config.hidden);
    sizes.push(d_out);
    let mut model = init_model(&sizes, config.seed)?;

    if config.pretrain_epochs > 0 {
        let mut recon_sizes = sizes.clone();
        *recon_sizes.last_mut().unwrap() = d_in;
        let mut recon = init_model(&recon_sizes, config.seed ^ 0x5EED)?;
        let recon_data: Vec<Sample> = normalized.iter().map(|(x, _)| (x.clone(), x.clone())).collect();
        let pre = TrainConfig { epochs: config.pretrain_epochs, ..config.clone() };
        fit(&mut recon, &recon_data, &pre, config.seed ^ 0x5EED)?;
        let encoder_layers = (model.n_layers() / 2).max(1).min(model.n_layers() - 1);
        for l in 0..encoder_layers {
            model.weights[l].clone_from(&recon.weights[l]);
            model.biases[l].clone_from(&recon.biases[l]);
        }
    }

    let trace = fit(&mut model, &normalized, config, config.seed)?;
    let mut range = vec![[f64::INFINITY, f64::NEG_INFINITY]; d_out];
    for (_, y) in data {
        for (r, v) in range.iter_mut().zip(y) {
            r[0] = r[0].min(*v);
            r[1] = r[1].max(*v);
        }
    }
    model.input_norm = input_norm;
    model.target_norm = target_norm;
    model.target_range = Some(range);
    model.config = Some(config.clone());
    model.loss_trace = trace.clone();
    Ok((model, trace))
}

/// Features for one session: `[log10 n_initial, attempt_index, qber_est]`.
pub fn session_features(n_initial: usize, attempt_index: usize, qber_est: f64) -> Vec<f64> {
    vec![(n_initial.max(1) as f64).log10(), attempt_index as f64, qber_est]
}

/// Returns `(qber_pred, key_len_fraction_pred)`.
pub fn predict_session(model: &AutoencoderModel, features: &[f64]) -> Result<(f64, f64)> {
    if !model.is_trained() {
        return Err(Error::param("model", "has not been trained"));
    }
    if model.input_dim() != SESSION_FEATURES || model.output_dim() != SESSION_TARGETS {
        return Err(Error::DimensionMismatch { expected: SESSION_FEATURES, actual: model.input_dim() });
    }
    let out = model.forward(features)?;
    Ok((out[0].max(0.0), out[1].max(0.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Fraction within the relative band, per output.
    pub accuracy: Vec<f64>,
    /// Mean absolute error in target units, per output.
    pub mae: Vec<f64>,
    /// Mean squared error on normalized targets.
    pub mse: f64,
}

/// Correct iff |pred − true| ≤ band·max(|true|, ACCURACY_FLOOR).
pub fn within_band(pred: f64, truth: f64, band: f64) -> bool {
    (pred - truth).abs() <= band * truth.abs().max(ACCURACY_FLOOR)
}

pub fn evaluate_predictions(predictions: &[Vec<f64>], truths: &[Vec<f64>], norm: &Normalizer, band: f64) -> Evaluation {
    let k = truths.first().map_or(0, Vec::len);
    let n = truths.len() as f64;
    let mut hits = vec![0usize; k];
    let mut mae = vec![0.0; k];
    let mut mse = 0.0;
    for (p, t) in predictions.iter().zip(truths) {
        for j in 0..k {
            // Tiny slack keeps the inclusive boundary robust to rounding.
            if (p[j] - t[j]).abs() <= band * t[j].abs().max(ACCURACY_FLOOR) * (1.0 + 1e-12) {
                hits[j] += 1;
            }
            mae[j] += (p[j] - t[j]).abs() / n;
            mse += ((p[j] - t[j]) / norm.scale[j]).powi(2);
        }
    }
    Evaluation {
        accuracy: hits.iter().map(|&h| h as f64 / n).collect(),
        mae,
        mse: mse / (n * k as f64),
    }
}

/// Session-task evaluation (predictions clamped as in `predict_session`).
pub fn evaluate(model: &AutoencoderModel, test_set: &[Sample], band: f64) -> Result<Evaluation> {
    if test_set.is_empty() {
        return Err(Error::param("test_set", "is empty"));
    }
    let preds = test_set
        .iter()
        .map(|(x, _)| model.forward(x).map(|p| p.into_iter().map(|v| v.max(0.0)).collect()))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let truths: Vec<Vec<f64>> = test_set.iter().map(|(_, y)| y.clone()).collect();
    Ok(evaluate_predictions(&preds, &truths, &model.target_norm, band))
}

/// Objective for the tuner: g(p, q, s).
pub trait Surrogate {
    fn g(&self, x: [f64; 3]) -> f64;
}

impl<F: Fn([f64; 3]) -> f64> Surrogate for F {
    fn g(&self, x: [f64; 3]) -> f64 {
        self(x)
    }
}

/// Predicted final key length with `(p, q, s)` read as the session features.
pub struct ModelSurrogate<'a>(pub &'a AutoencoderModel);

impl Surrogate for ModelSurrogate<'_> {
    fn g(&self, x: [f64; 3]) -> f64 {
        match self.0.forward(&x) {
            Ok(out) => out[1].max(0.0) * 10f64.powf(x[0]),
            Err(_) => f64::NAN,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub step: f64,
    pub iterations: usize,
    pub k_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub params: [f64; 3],
    pub value: f64,
    pub trace: Vec<([f64; 3], f64)>,
}

fn eval_g(g: &dyn Surrogate, x: [f64; 3]) -> Result<f64> {
    let v = g.g(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("surrogate at {x:?}")))
    }
}

fn central_gradient(g: &dyn Surrogate, x: [f64; 3]) -> Result<[f64; 3]> {
    let mut grad = [0.0; 3];
    for i in 0..3 {
        let h = 1e-5 * x[i].abs().max(1.0);
        let (mut hi, mut lo) = (x, x);
        hi[i] += h;
        lo[i] -= h;
        grad[i] = (eval_g(g, hi)? - eval_g(g, lo)?) / (2.0 * h);
    }
    Ok(grad)
}

fn axpy(x: [f64; 3], a: f64, d: [f64; 3]) -> [f64; 3] {
    [x[0] + a * d[0], x[1] + a * d[1], x[2] + a * d[2]]
}

/// Gradient ascent on g with halving backtracking whenever a step would exceed k_max.
/// An infeasible start is first walked downhill until g ≤ k_max.
pub fn tune_parameters(g: &dyn Surrogate, init: [f64; 3], config: &TuneConfig) -> Result<TuneResult> {
    if !(config.step.is_finite() && config.step > 0.0) {
        return Err(Error::param("step", "must be positive"));
    }
    let mut x = init;
    let mut value = eval_g(g, x)?;
    let mut descent = config.step;
    let mut tries = 0;
    while value > config.k_max {
        let grad = central_gradient(g, x)?;
        if grad.iter().all(|v| *v == 0.0) || tries > 200 {
            return Err(Error::param("k_max", "cannot reach a feasible starting point"));
        }
        let candidate = axpy(x, -descent, grad);
        let cv = eval_g(g, candidate)?;
        if cv < value {
            x = candidate;
            value = cv;
        } else {
            descent *= 0.5;
        }
        tries += 1;
    }
    let mut trace = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let grad = central_gradient(g, x)?;
        let mut t = config.step;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = axpy(x, t, grad);
            let cv = eval_g(g, candidate)?;
            if cv <= config.k_max {
                accepted = Some((candidate, cv));
                break;
            }
            t *= 0.5;
        }
        if let Some((nx, nv)) = accepted {
            x = nx;
            value = nv;
        }
        trace.push((x, value));
    }
    Ok(TuneResult { params: x, value, trace })
}
