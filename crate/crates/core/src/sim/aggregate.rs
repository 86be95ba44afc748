//! Server-side aggregation of participant models.
//!
//! Every rule reduces participants in ascending client-id order, so the
//! result does not depend on the order in which local training finished.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregateError {
    #[error("no participant updates to aggregate")]
    NoUpdates,
    #[error("update from client {client_id} has {found} parameters, expected {expected}")]
    ShapeMismatch { client_id: usize, expected: usize, found: usize },
    #[error("client {0} reported zero data points or zero local steps")]
    ZeroWeight(usize),
    #[error("invalid aggregator setting: {0}")]
    InvalidSetting(String),
}

/// A trained participant model and what the server needs to weigh it.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub params: ModelParams,
    pub n_k: usize,
    pub local_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AggregatorKind {
    FedAvg,
    FedNova,
    FedAdagrad { lr: f64, beta1: f64, tau: f64 },
}

impl AggregatorKind {
    pub fn fedadagrad_default() -> Self {
        Self::FedAdagrad { lr: 0.1, beta1: 0.0, tau: 1e-3 }
    }

    pub fn validate(&self) -> Result<(), AggregateError> {
        if let Self::FedAdagrad { lr, beta1, tau } = *self {
            if !(lr > 0.0) {
                return Err(AggregateError::InvalidSetting(format!("server lr must be > 0, got {lr}")));
            }
            if !(tau > 0.0) {
                return Err(AggregateError::InvalidSetting(format!("tau must be > 0, got {tau}")));
            }
            if !(0.0..1.0).contains(&beta1) {
                return Err(AggregateError::InvalidSetting(format!("beta1 must be in [0, 1), got {beta1}")));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::FedAvg => "fedavg",
            Self::FedNova => "fednova",
            Self::FedAdagrad { .. } => "fedadagrad",
        }
    }
}

/// Checks shapes and returns the updates sorted by client id together with
/// their data weights `n_k / sum(n)`.
fn ordered<'a>(
    global: &ModelParams,
    updates: &'a [ClientUpdate],
) -> Result<(Vec<&'a ClientUpdate>, Vec<f64>), AggregateError> {
    if updates.is_empty() {
        return Err(AggregateError::NoUpdates);
    }
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    for u in &sorted {
        if u.params.len() != global.len() {
            return Err(AggregateError::ShapeMismatch {
                client_id: u.client_id,
                expected: global.len(),
                found: u.params.len(),
            });
        }
        if u.n_k == 0 {
            return Err(AggregateError::ZeroWeight(u.client_id));
        }
    }
    let total: usize = sorted.iter().map(|u| u.n_k).sum();
    let weights = sorted.iter().map(|u| u.n_k as f64 / total as f64).collect();
    Ok((sorted, weights))
}

/// Data-size weighted average of participant parameters.
pub fn aggregate_fedavg(global: &ModelParams, updates: &[ClientUpdate]) -> Result<ModelParams, AggregateError> {
    let (sorted, weights) = ordered(global, updates)?;
    let mut out = vec![0.0; global.len()];
    for (u, w) in sorted.iter().zip(&weights) {
        for (o, p) in out.iter_mut().zip(&u.params.values) {
            *o += w * p;
        }
    }
    Ok(ModelParams { spec: global.spec, values: out })
}

/// Normalized averaging: each client delta is divided by its local step
/// count, the normalized deltas are data-weighted, and the result is scaled
/// by the data-weighted mean step count `tau_eff`.
///
/// Evaluated as `sum_k w_k p_k + sum_k w_k (tau_eff / tau_k - 1)(p_k - g)`,
/// which is algebraically `g + tau_eff * sum_k w_k (p_k - g) / tau_k` and
/// reduces to the plain weighted average bit for bit when all step counts
/// are equal.
pub fn aggregate_fednova(global: &ModelParams, updates: &[ClientUpdate]) -> Result<ModelParams, AggregateError> {
    let (sorted, weights) = ordered(global, updates)?;
    if let Some(u) = sorted.iter().find(|u| u.local_steps == 0) {
        return Err(AggregateError::ZeroWeight(u.client_id));
    }
    let tau_eff: f64 = sorted.iter().zip(&weights).map(|(u, w)| w * u.local_steps as f64).sum();
    let mut avg = vec![0.0; global.len()];
    let mut correction = vec![0.0; global.len()];
    for (u, w) in sorted.iter().zip(&weights) {
        let excess = tau_eff / u.local_steps as f64 - 1.0;
        for (i, p) in u.params.values.iter().enumerate() {
            avg[i] += w * p;
            if excess != 0.0 {
                correction[i] += w * excess * (p - global.values[i]);
            }
        }
    }
    let values = avg.iter().zip(&correction).map(|(a, c)| a + c).collect();
    Ok(ModelParams { spec: global.spec, values })
}

/// First moment and squared-update accumulator of the adaptive server.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdagradState {
    pub momentum: Vec<f64>,
    pub accumulator: Vec<f64>,
}

/// Adaptive server step on the pseudo-gradient `sum_k w_k (p_k - g)`:
/// `m <- beta1 m + (1 - beta1) d`, `v <- v + d^2`, `g <- g + lr m / (sqrt(v) + tau)`.
pub fn aggregate_fedadagrad(
    state: &mut AdagradState,
    global: &ModelParams,
    updates: &[ClientUpdate],
    lr: f64,
    beta1: f64,
    tau: f64,
) -> Result<ModelParams, AggregateError> {
    let (sorted, weights) = ordered(global, updates)?;
    let n = global.len();
    if state.momentum.is_empty() && state.accumulator.is_empty() {
        state.momentum = vec![0.0; n];
        state.accumulator = vec![0.0; n];
    }
    if state.momentum.len() != n || state.accumulator.len() != n {
        return Err(AggregateError::ShapeMismatch { client_id: usize::MAX, expected: n, found: state.momentum.len() });
    }
    let mut pseudo = vec![0.0; n];
    for (u, w) in sorted.iter().zip(&weights) {
        for ((d, p), g) in pseudo.iter_mut().zip(&u.params.values).zip(&global.values) {
            *d += w * (p - g);
        }
    }
    let mut values = global.values.clone();
    for i in 0..n {
        state.momentum[i] = beta1 * state.momentum[i] + (1.0 - beta1) * pseudo[i];
        state.accumulator[i] += pseudo[i] * pseudo[i];
        values[i] += lr * state.momentum[i] / (state.accumulator[i].sqrt() + tau);
    }
    Ok(ModelParams { spec: global.spec, values })
}

/// An aggregation rule together with any server state it carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerAggregator {
    pub kind: AggregatorKind,
    pub adagrad: AdagradState,
}

impl ServerAggregator {
    pub fn new(kind: AggregatorKind) -> Result<Self, AggregateError> {
        kind.validate()?;
        Ok(Self { kind, adagrad: AdagradState::default() })
    }

    pub fn aggregate(&mut self, global: &ModelParams, updates: &[ClientUpdate]) -> Result<ModelParams, AggregateError> {
        match self.kind {
            AggregatorKind::FedAvg => aggregate_fedavg(global, updates),
            AggregatorKind::FedNova => aggregate_fednova(global, updates),
            AggregatorKind::FedAdagrad { lr, beta1, tau } => {
                aggregate_fedadagrad(&mut self.adagrad, global, updates, lr, beta1, tau)
            }
        }
    }
}
