//! One-hidden-layer perceptron with ReLU, softmax cross-entropy and
//! mini-batch SGD with momentum.
//!
//! Parameters live in a single flat vector laid out as
//! `[W1 (hidden x input), b1 (hidden), W2 (classes x hidden), b2 (classes)]`
//! so that aggregation can treat a model as one array.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClientShard, Dataset};
use crate::types::LocalPasses;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("client shard is empty")]
    EmptyShard,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("feature width {found} does not match model input {expected}")]
    InputMismatch { expected: usize, found: usize },
    #[error("invalid training option: {0}")]
    InvalidOption(String),
    #[error("parameter vector has length {found}, expected {expected}")]
    ShapeMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Result<Self, ModelError> {
        if input_dim == 0 || hidden_dim == 0 || num_classes == 0 {
            return Err(ModelError::InvalidOption("all layer sizes must be >= 1".into()));
        }
        Ok(Self { input_dim, hidden_dim, num_classes })
    }

    pub fn param_count(&self) -> usize {
        self.input_dim * self.hidden_dim
            + self.hidden_dim
            + self.hidden_dim * self.num_classes
            + self.num_classes
    }

    fn b1_offset(&self) -> usize {
        self.input_dim * self.hidden_dim
    }

    fn w2_offset(&self) -> usize {
        self.b1_offset() + self.hidden_dim
    }

    fn b2_offset(&self) -> usize {
        self.w2_offset() + self.hidden_dim * self.num_classes
    }
}

/// FLOPs per input and parameter count. A multiply-accumulate counts as two
/// FLOPs; biases and activations are not counted.
pub fn cost_counts(spec: &MlpSpec) -> (f64, f64) {
    let macs = spec.input_dim * spec.hidden_dim + spec.hidden_dim * spec.num_classes;
    ((2 * macs) as f64, spec.param_count() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub spec: MlpSpec,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(spec: MlpSpec) -> Self {
        Self { spec, values: vec![0.0; spec.param_count()] }
    }

    pub fn from_values(spec: MlpSpec, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != spec.param_count() {
            return Err(ModelError::ShapeMismatch { expected: spec.param_count(), found: values.len() });
        }
        Ok(Self { spec, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Uniform weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero biases.
pub fn init_params(spec: MlpSpec, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::zeros(spec);
    let bound1 = 1.0 / (spec.input_dim as f64).sqrt();
    for w in &mut p.values[..spec.b1_offset()] {
        *w = rng.random_range(-bound1..bound1);
    }
    let bound2 = 1.0 / (spec.hidden_dim as f64).sqrt();
    let (w2, b2) = (spec.w2_offset(), spec.b2_offset());
    for w in &mut p.values[w2..b2] {
        *w = rng.random_range(-bound2..bound2);
    }
    p
}

/// Scratch buffers for one forward/backward pass.
struct Workspace {
    hidden: Vec<f64>,
    probs: Vec<f64>,
    d_hidden: Vec<f64>,
}

impl Workspace {
    fn new(spec: &MlpSpec) -> Self {
        Self {
            hidden: vec![0.0; spec.hidden_dim],
            probs: vec![0.0; spec.num_classes],
            d_hidden: vec![0.0; spec.hidden_dim],
        }
    }
}

fn forward(params: &ModelParams, x: &[f64], ws: &mut Workspace) {
    let s = &params.spec;
    let v = &params.values;
    let (w1, b1) = (&v[..s.b1_offset()], &v[s.b1_offset()..s.w2_offset()]);
    let (w2, b2) = (&v[s.w2_offset()..s.b2_offset()], &v[s.b2_offset()..]);
    for j in 0..s.hidden_dim {
        let row = &w1[j * s.input_dim..(j + 1) * s.input_dim];
        let a = b1[j] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        ws.hidden[j] = a.max(0.0);
    }
    for c in 0..s.num_classes {
        let row = &w2[c * s.hidden_dim..(c + 1) * s.hidden_dim];
        ws.probs[c] = b2[c] + row.iter().zip(&ws.hidden).map(|(w, h)| w * h).sum::<f64>();
    }
}

/// In-place softmax with a max shift; returns log-sum-exp of the logits.
fn softmax_in_place(logits: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
    max + sum.ln()
}

/// Class probabilities for one input.
pub fn predict_proba(params: &ModelParams, x: &[f64]) -> Vec<f64> {
    let mut ws = Workspace::new(&params.spec);
    forward(params, x, &mut ws);
    softmax_in_place(&mut ws.probs);
    ws.probs
}

pub fn predict(params: &ModelParams, x: &[f64]) -> usize {
    let mut ws = Workspace::new(&params.spec);
    forward(params, x, &mut ws);
    argmax(&ws.probs)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy over `rows` and its gradient, written into `grad`.
fn loss_and_grad_rows(
    params: &ModelParams,
    features: &[f64],
    labels: &[usize],
    rows: &[usize],
    grad: &mut [f64],
    ws: &mut Workspace,
) -> f64 {
    let s = params.spec;
    let d = s.input_dim;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 1.0 / rows.len() as f64;
    let mut loss = 0.0;
    let (b1o, w2o, b2o) = (s.b1_offset(), s.w2_offset(), s.b2_offset());
    for &r in rows {
        let x = &features[r * d..(r + 1) * d];
        let y = labels[r];
        forward(params, x, ws);
        let logit_y = ws.probs[y];
        let lse = softmax_in_place(&mut ws.probs);
        loss += lse - logit_y;

        // d loss / d logits = probs - onehot(y)
        ws.probs[y] -= 1.0;
        ws.d_hidden.iter_mut().for_each(|g| *g = 0.0);
        let w2 = &params.values[w2o..b2o];
        for c in 0..s.num_classes {
            let dl = ws.probs[c] * scale;
            grad[b2o + c] += dl;
            let g_row = &mut grad[w2o + c * s.hidden_dim..w2o + (c + 1) * s.hidden_dim];
            for (g, h) in g_row.iter_mut().zip(&ws.hidden) {
                *g += dl * h;
            }
            let w_row = &w2[c * s.hidden_dim..(c + 1) * s.hidden_dim];
            for (dh, w) in ws.d_hidden.iter_mut().zip(w_row) {
                *dh += dl * w;
            }
        }
        for j in 0..s.hidden_dim {
            if ws.hidden[j] <= 0.0 {
                continue;
            }
            let dh = ws.d_hidden[j];
            grad[b1o + j] += dh;
            let g_row = &mut grad[j * d..(j + 1) * d];
            for (g, xi) in g_row.iter_mut().zip(x) {
                *g += dh * xi;
            }
        }
    }
    loss * scale
}

/// Mean softmax cross-entropy over all rows and its gradient.
pub fn loss_and_gradient(params: &ModelParams, features: &[f64], labels: &[usize]) -> (f64, Vec<f64>) {
    let rows: Vec<usize> = (0..labels.len()).collect();
    let mut grad = vec![0.0; params.len()];
    let mut ws = Workspace::new(&params.spec);
    let loss = loss_and_grad_rows(params, features, labels, &rows, &mut grad, &mut ws);
    (loss, grad)
}

pub fn loss(params: &ModelParams, features: &[f64], labels: &[usize]) -> f64 {
    loss_and_gradient(params, features, labels).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdOptions {
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
}

impl Default for SgdOptions {
    fn default() -> Self {
        Self { batch_size: 10, lr: 0.01, momentum: 0.9 }
    }
}

impl SgdOptions {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 {
            return Err(ModelError::InvalidOption("batch size must be >= 1".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(ModelError::InvalidOption(format!("learning rate {} invalid", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(ModelError::InvalidOption(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

/// Runs `passes` epochs of shuffled mini-batch SGD with momentum on one
/// shard. Returns the updated parameters and the number of mini-batch steps.
///
/// A fractional pass trains once over a seeded random subset holding that
/// share of the shard (at least one row).
pub fn train_local(
    params: &ModelParams,
    shard: &ClientShard,
    passes: LocalPasses,
    opts: &SgdOptions,
    seed: u64,
) -> Result<(ModelParams, usize), ModelError> {
    opts.validate()?;
    let n = shard.len();
    if n == 0 {
        return Err(ModelError::EmptyShard);
    }
    if shard.input_dim != params.spec.input_dim {
        return Err(ModelError::InputMismatch { expected: params.spec.input_dim, found: shard.input_dim });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let (epochs, used) = match passes {
        LocalPasses::Whole(e) => (e as usize, n),
        LocalPasses::Fraction(f) => (1, ((f * n as f64).round() as usize).clamp(1, n)),
    };

    let mut out = params.clone();
    let mut velocity = vec![0.0; out.len()];
    let mut grad = vec![0.0; out.len()];
    let mut ws = Workspace::new(&out.spec);
    let mut steps = 0;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order[..used].chunks(opts.batch_size) {
            loss_and_grad_rows(&out, &shard.features, &shard.labels, batch, &mut grad, &mut ws);
            for ((w, v), g) in out.values.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = opts.momentum * *v + g;
                *w -= opts.lr * *v;
            }
            steps += 1;
        }
    }
    Ok((out, steps))
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn evaluate(params: &ModelParams, data: &Dataset) -> Result<f64, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if data.input_dim != params.spec.input_dim {
        return Err(ModelError::InputMismatch { expected: params.spec.input_dim, found: data.input_dim });
    }
    let mut ws = Workspace::new(&params.spec);
    let correct = (0..data.len())
        .filter(|&r| {
            forward(params, data.row(r), &mut ws);
            argmax(&ws.probs) == data.labels[r]
        })
        .count();
    Ok(correct as f64 / data.len() as f64)
}
