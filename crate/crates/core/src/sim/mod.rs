//! The federated training loop.
//!
//! Each round samples `M` participants uniformly without replacement, trains
//! each locally for `E` passes (in parallel when enabled), aggregates on the
//! server, evaluates on the full test set and books the round's overhead.
//! With a tuner attached, every round's accuracy and cumulative overhead are
//! fed to it and any new `(M, E)` takes effect from the next round.

pub mod aggregate;

use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::FederatedDataset;
use crate::model::{cost_counts, evaluate, init_params, train_local, MlpSpec, ModelError, SgdOptions};
use crate::overhead::{accumulate, model_cost_constants, round_overhead, OverheadError, RoundParticipation};
use crate::rng::{derive_seed, stream};
use crate::tuner::{Decision, FedTune, TunerConfig, TunerError};
use crate::types::{CostConstants, HyperParams, LocalPasses, OverheadVector, Preferences};

pub use aggregate::{
    aggregate_fedadagrad, aggregate_fedavg, aggregate_fednova, AdagradState, AggregateError, AggregatorKind,
    ClientUpdate, ServerAggregator,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot select {m} participants from {k} clients")]
    MTooLarge { m: usize, k: usize },
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Overhead(#[from] OverheadError),
    #[error(transparent)]
    Tuner(#[from] TunerError),
    #[error("malformed trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `m` distinct client ids drawn uniformly from `0..k`, ascending.
pub fn sample_participants<R: Rng + ?Sized>(k: usize, m: usize, rng: &mut R) -> Result<Vec<usize>, SimError> {
    if m == 0 || m > k {
        return Err(SimError::MTooLarge { m, k });
    }
    let mut ids = rand::seq::index::sample(rng, k, m).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunerSetup {
    pub config: TunerConfig,
    pub prefs: Preferences,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub hidden_dim: usize,
    pub initial_m: usize,
    pub initial_e: LocalPasses,
    pub aggregator: AggregatorKind,
    pub sgd: SgdOptions,
    pub target_accuracy: f64,
    pub max_rounds: usize,
    pub tuner: Option<TunerSetup>,
    /// Overrides the constants derived from the model's own FLOP and
    /// parameter counts.
    pub costs: Option<CostConstants>,
    pub seed: u64,
    /// Train participants of a round on the rayon pool.
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 16,
            initial_m: 20,
            initial_e: LocalPasses::Whole(20),
            aggregator: AggregatorKind::FedAvg,
            sgd: SgdOptions { lr: 0.02, momentum: 0.0, ..SgdOptions::default() },
            target_accuracy: 0.85,
            max_rounds: 5000,
            tuner: None,
            costs: None,
            seed: 0,
            parallel: true,
        }
    }
}

impl RunConfig {
    pub fn model_spec(&self, data: &FederatedDataset) -> Result<MlpSpec, SimError> {
        Ok(MlpSpec::new(data.input_dim, self.hidden_dim, data.num_classes)?)
    }

    pub fn cost_constants(&self, spec: &MlpSpec) -> Result<CostConstants, SimError> {
        match self.costs {
            Some(c) => Ok(c),
            None => {
                let (flops, params) = cost_counts(spec);
                Ok(model_cost_constants(flops, params)?)
            }
        }
    }

    pub fn validate(&self, data: &FederatedDataset) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.target_accuracy) {
            return Err(SimError::Config(format!("target accuracy {} outside [0, 1]", self.target_accuracy)));
        }
        if self.max_rounds == 0 {
            return Err(SimError::Config("max_rounds must be >= 1".into()));
        }
        let k = data.num_clients();
        if self.initial_m == 0 || self.initial_m > k {
            return Err(SimError::MTooLarge { m: self.initial_m, k });
        }
        self.sgd.validate()?;
        self.aggregator.validate()?;
        if let Some(t) = &self.tuner {
            t.config.validate()?;
            let e = self.initial_e.whole().ok_or_else(|| {
                SimError::Config("the tuner needs a whole number of local passes".into())
            })?;
            if t.config.m_max > k {
                return Err(SimError::Config(format!("tuner m_max {} exceeds K = {k}", t.config.m_max)));
            }
            if !t.config.admits(HyperParams { m: self.initial_m, e }) {
                return Err(SimError::Config("initial (M, E) outside tuner bounds".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub m: usize,
    pub e: LocalPasses,
    pub participants: Vec<usize>,
    pub sizes: Vec<usize>,
    pub round_overhead: OverheadVector,
    pub cumulative: OverheadVector,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    ReachedTarget,
    ExhaustedMaxRounds,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ReachedTarget => "reached_target",
            Self::ExhaustedMaxRounds => "exhausted_max_rounds",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub seed: u64,
    pub status: RunStatus,
    /// Rounds run; equals `R` when the target was reached.
    pub rounds: usize,
    pub totals: OverheadVector,
    pub final_accuracy: f64,
    /// `(M, E)` of the last round.
    pub final_m: usize,
    pub final_e: LocalPasses,
    pub costs: CostConstants,
    pub aggregator: String,
    pub activations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub records: Vec<RoundRecord>,
    pub summary: TraceSummary,
}

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceLine {
    Round(RoundRecord),
    Summary(TraceSummary),
}

impl TrainingTrace {
    pub fn decisions(&self) -> impl Iterator<Item = (usize, &Decision)> {
        self.records.iter().filter_map(|r| r.decision.as_ref().map(|d| (r.round, d)))
    }

    pub fn participation(&self) -> Vec<RoundParticipation> {
        self.records
            .iter()
            .map(|r| RoundParticipation { round_index: r.round, participant_sizes: r.sizes.clone(), e: r.e })
            .collect()
    }

    /// Line-delimited JSON: one `round` record per round, then a `summary`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), SimError> {
        for r in &self.records {
            serde_json::to_writer(&mut w, &TraceLine::Round(r.clone())).map_err(|e| SimError::Trace(e.to_string()))?;
            writeln!(w)?;
        }
        serde_json::to_writer(&mut w, &TraceLine::Summary(self.summary.clone()))
            .map_err(|e| SimError::Trace(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, SimError> {
        let mut records = Vec::new();
        let mut summary = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line).map_err(|e| SimError::Trace(format!("line {}: {e}", i + 1)))? {
                TraceLine::Round(rec) => records.push(rec),
                TraceLine::Summary(s) => summary = Some(s),
            }
        }
        let summary = summary.ok_or_else(|| SimError::Trace("missing summary record".into()))?;
        Ok(Self { records, summary })
    }
}

fn shuffle_seed(seed: u64, round: usize, client: usize) -> u64 {
    derive_seed(seed, "shuffle", ((round as u64) << 32) ^ client as u64)
}

/// Runs federated training until the target accuracy or `max_rounds`.
pub fn run_training(cfg: &RunConfig, data: &FederatedDataset) -> Result<TrainingTrace, SimError> {
    cfg.validate(data)?;
    let spec = cfg.model_spec(data)?;
    let costs = cfg.cost_constants(&spec)?;
    let k = data.num_clients();

    let mut params = init_params(spec, derive_seed(cfg.seed, "init", 0));
    let mut sampler = stream(cfg.seed, "sampling", 0);
    let mut server = ServerAggregator::new(cfg.aggregator)?;
    let mut tuner = match &cfg.tuner {
        Some(t) => {
            let e = cfg.initial_e.whole().unwrap_or(1);
            Some(FedTune::new(t.config.clone(), t.prefs, HyperParams::new(cfg.initial_m, e).map_err(|e| SimError::Config(e.to_string()))?)?)
        }
        None => None,
    };

    let mut m = cfg.initial_m;
    let mut e = cfg.initial_e;
    let mut cumulative = OverheadVector::ZERO;
    let mut records = Vec::new();
    let mut status = RunStatus::ExhaustedMaxRounds;
    let mut activations = 0;

    for round in 1..=cfg.max_rounds {
        let ids = sample_participants(k, m, &mut sampler)?;
        let train_one = |&id: &usize| -> Result<ClientUpdate, ModelError> {
            let shard = &data.shards[id];
            let (p, steps) = train_local(&params, shard, e, &cfg.sgd, shuffle_seed(cfg.seed, round, id))?;
            Ok(ClientUpdate { client_id: id, params: p, n_k: shard.len(), local_steps: steps })
        };
        let updates: Vec<ClientUpdate> = if cfg.parallel {
            ids.par_iter().map(train_one).collect::<Result<_, _>>()?
        } else {
            ids.iter().map(train_one).collect::<Result<_, _>>()?
        };
        params = server.aggregate(&params, &updates)?;
        let accuracy = evaluate(&params, &data.test_set)?;

        let sizes: Vec<usize> = ids.iter().map(|&id| data.shards[id].len()).collect();
        let participation = RoundParticipation { round_index: round, participant_sizes: sizes.clone(), e };
        let round_cost = round_overhead(&participation, &costs)?;
        cumulative = accumulate(&cumulative, &round_cost);

        let decision = match tuner.as_mut() {
            Some(t) => t.observe_round(accuracy, cumulative)?,
            None => None,
        };
        records.push(RoundRecord {
            round,
            m,
            e,
            participants: ids,
            sizes,
            round_overhead: round_cost,
            cumulative,
            accuracy,
            decision: decision.clone(),
        });
        if let Some(d) = decision {
            activations += 1;
            m = d.next.m;
            e = LocalPasses::Whole(d.next.e);
        }
        if accuracy >= cfg.target_accuracy {
            status = RunStatus::ReachedTarget;
            break;
        }
    }

    let last = records.last().expect("max_rounds >= 1");
    let summary = TraceSummary {
        seed: cfg.seed,
        status,
        rounds: records.len(),
        totals: cumulative,
        final_accuracy: last.accuracy,
        final_m: last.m,
        final_e: last.e,
        costs,
        aggregator: cfg.aggregator.name().to_string(),
        activations,
    };
    log::debug!(
        "seed {} finished: {} after {} rounds, final (M, E) = ({}, {})",
        cfg.seed,
        status.as_str(),
        summary.rounds,
        summary.final_m,
        summary.final_e
    );
    Ok(TrainingTrace { records, summary })
}

/// Re-feeds a trace's accuracies to a fresh tuner, booking the logged
/// participation under `costs`. Returns the decision made at each round.
pub fn replay_decisions(
    trace: &TrainingTrace,
    setup: &TunerSetup,
    costs: &CostConstants,
) -> Result<Vec<Option<Decision>>, SimError> {
    let first = trace.records.first().ok_or_else(|| SimError::Trace("empty trace".into()))?;
    let e = first.e.whole().ok_or_else(|| SimError::Trace("fractional passes cannot be tuned".into()))?;
    let initial = HyperParams::new(first.m, e).map_err(|err| SimError::Trace(err.to_string()))?;
    let mut tuner = FedTune::new(setup.config.clone(), setup.prefs, initial)?;
    let mut cumulative = OverheadVector::ZERO;
    let mut out = Vec::with_capacity(trace.records.len());
    for (rec, p) in trace.records.iter().zip(trace.participation()) {
        cumulative = accumulate(&cumulative, &round_overhead(&p, costs)?);
        out.push(tuner.observe_round(rec.accuracy, cumulative)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::overhead::trace_overhead;

    fn tiny_data() -> FederatedDataset {
        let spec = SyntheticSpec { k_clients: 12, mean_shard_size: 8, test_size: 60, ..SyntheticSpec::default() };
        generate_synthetic(&spec, 1).unwrap()
    }

    fn tiny_cfg() -> RunConfig {
        RunConfig {
            hidden_dim: 4,
            initial_m: 3,
            initial_e: LocalPasses::Whole(2),
            max_rounds: 6,
            target_accuracy: 1.0,
            ..RunConfig::default()
        }
    }

    #[test]
    fn sampling_basics() {
        let mut rng = stream(0, "t", 0);
        assert_eq!(sample_participants(5, 5, &mut rng).unwrap(), vec![0, 1, 2, 3, 4]);
        let a = sample_participants(5, 1, &mut stream(3, "t", 0)).unwrap();
        let b = sample_participants(5, 1, &mut stream(3, "t", 0)).unwrap();
        assert_eq!(a, b);
        assert!(matches!(sample_participants(5, 6, &mut rng), Err(SimError::MTooLarge { m: 6, k: 5 })));
        let ids = sample_participants(50, 20, &mut rng).unwrap();
        let mut dedup = ids.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 20);
    }

    #[test]
    fn zero_target_stops_after_one_round() {
        let d = tiny_data();
        let cfg = RunConfig { target_accuracy: 0.0, ..tiny_cfg() };
        let t = run_training(&cfg, &d).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.summary.status, RunStatus::ReachedTarget);
        assert_eq!(t.summary.rounds, 1);
    }

    #[test]
    fn baseline_keeps_hyper_params() {
        let d = tiny_data();
        let t = run_training(&tiny_cfg(), &d).unwrap();
        assert_eq!(t.summary.status, RunStatus::ExhaustedMaxRounds);
        assert!(t.records.iter().all(|r| r.m == 3 && r.e == LocalPasses::Whole(2) && r.decision.is_none()));
    }

    #[test]
    fn trace_accounting_matches_closed_form() {
        let d = tiny_data();
        let t = run_training(&tiny_cfg(), &d).unwrap();
        let closed = trace_overhead(&t.participation(), &t.summary.costs).unwrap();
        assert_eq!(closed, t.summary.totals);
        for w in t.records.windows(2) {
            assert_eq!(w[1].cumulative, w[0].cumulative + w[1].round_overhead);
        }
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let d = tiny_data();
        let a = run_training(&tiny_cfg(), &d).unwrap();
        let b = run_training(&RunConfig { parallel: false, ..tiny_cfg() }, &d).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trace_round_trips_through_jsonl() {
        let d = tiny_data();
        let cfg = RunConfig {
            tuner: Some(TunerSetup {
                config: TunerConfig { epsilon: 0.001, ..TunerConfig::for_population(12) },
                prefs: Preferences::equal(),
            }),
            ..tiny_cfg()
        };
        let t = run_training(&cfg, &d).unwrap();
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        let back = TrainingTrace::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn config_errors() {
        let d = tiny_data();
        assert!(matches!(
            run_training(&RunConfig { initial_m: 13, ..tiny_cfg() }, &d),
            Err(SimError::MTooLarge { .. })
        ));
        let frac_with_tuner = RunConfig {
            initial_e: LocalPasses::Fraction(0.5),
            tuner: Some(TunerSetup { config: TunerConfig::for_population(12), prefs: Preferences::equal() }),
            ..tiny_cfg()
        };
        assert!(matches!(run_training(&frac_with_tuner, &d), Err(SimError::Config(_))));
    }
}
