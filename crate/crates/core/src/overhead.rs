//! Per-round and cumulative accounting of computation time, transmission
//! time, computation load and transmission load.
//!
//! Every participant costs `c3 * E * n_k` computation load; the round's
//! computation time is bounded by the slowest participant, `c1 * E *
//! max(n_k)`. Transmission time is one constant `c2` per round and
//! transmission load is `c4` per participant.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{CostConstants, LocalPasses, OverheadVector, TypeError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OverheadError {
    #[error("round {round} has no participants")]
    EmptyParticipants { round: usize },
    #[error("round {round} has a participant with zero data points")]
    EmptyParticipant { round: usize },
    #[error(transparent)]
    Constants(#[from] TypeError),
}

/// Who took part in one round, reduced to what the cost model needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundParticipation {
    pub round_index: usize,
    /// `n_k` of every selected client.
    pub participant_sizes: Vec<usize>,
    pub e: LocalPasses,
}

impl RoundParticipation {
    pub fn new(round_index: usize, participant_sizes: Vec<usize>, e: impl Into<LocalPasses>) -> Self {
        Self { round_index, participant_sizes, e: e.into() }
    }
}

/// Overhead contributed by a single round.
pub fn round_overhead(
    p: &RoundParticipation,
    c: &CostConstants,
) -> Result<OverheadVector, OverheadError> {
    let largest = p
        .participant_sizes
        .iter()
        .copied()
        .max()
        .ok_or(OverheadError::EmptyParticipants { round: p.round_index })?;
    if p.participant_sizes.contains(&0) {
        return Err(OverheadError::EmptyParticipant { round: p.round_index });
    }
    let total: usize = p.participant_sizes.iter().sum();
    let e = p.e.as_f64();
    Ok(OverheadVector {
        comp_time: c.c1 * e * largest as f64,
        trans_time: c.c2,
        comp_load: c.c3 * e * total as f64,
        trans_load: c.c4 * p.participant_sizes.len() as f64,
    })
}

/// Running sum of round overheads.
pub fn accumulate(acc: &OverheadVector, round: &OverheadVector) -> OverheadVector {
    *acc + *round
}

/// Totals over a whole participation trace.
pub fn trace_overhead(
    rounds: &[RoundParticipation],
    c: &CostConstants,
) -> Result<OverheadVector, OverheadError> {
    rounds.iter().try_fold(OverheadVector::ZERO, |acc, p| {
        Ok(accumulate(&acc, &round_overhead(p, c)?))
    })
}

/// Cost constants from a model's per-input FLOPs and parameter count.
pub fn model_cost_constants(
    flops_per_input: f64,
    param_count: f64,
) -> Result<CostConstants, OverheadError> {
    if !(flops_per_input > 0.0) {
        return Err(TypeError::NonPositive { name: "flops_per_input", value: flops_per_input }.into());
    }
    if !(param_count > 0.0) {
        return Err(TypeError::NonPositive { name: "param_count", value: param_count }.into());
    }
    Ok(CostConstants::new(flops_per_input, param_count, flops_per_input, param_count)?)
}
