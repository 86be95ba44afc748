//! Online controller for the participant count `M` and local passes `E`.
//!
//! The controller is activated whenever test accuracy has improved by at
//! least `epsilon` since its previous activation. Each activation closes an
//! interval: the overhead spent since the previous activation, all of it
//! under a single `(M, E)` setting. With three intervals on record
//! (`prvprv`, `prv`, `cur`) it estimates the preference-weighted derivative
//! of the overhead with respect to `M` and `E` and moves each by one step
//! in the direction of its sign.
//!
//! Each overhead has a preferred direction per hyper-parameter:
//!
//! | overhead | M      | E       |
//! |----------|--------|---------|
//! | CompT    | larger | smaller |
//! | TransT   | larger | larger  |
//! | CompL    | smaller| smaller |
//! | TransL   | smaller| larger  |
//!
//! The magnitude of each term is scaled by a rate parameter (`eta` for `M`,
//! `zeta` for `E`) that tracks how fast that overhead has been changing.
//! Rates that favour the direction just taken are refreshed; when the last
//! move made the weighted overhead worse, the rates that oppose it are
//! multiplied by the penalty factor `D`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{compare, HyperParams, OverheadVector, Preferences, TypeError, OVERHEAD_NAMES};

/// `+1` where the overhead prefers a larger `M`.
pub const M_DIRECTION: [f64; 4] = [1.0, 1.0, -1.0, -1.0];
/// `+1` where the overhead prefers a larger `E`.
pub const E_DIRECTION: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];

/// Accuracy gains are compared with this much slack so that a gain of
/// exactly `epsilon` counts despite decimal rounding.
const GAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TunerError {
    #[error("tuner needs three checkpoints, has {0}")]
    InsufficientHistory(usize),
    #[error("interval overhead `{0}` is zero but carries a nonzero preference weight")]
    ZeroDenominator(&'static str),
    #[error("cumulative overhead decreased between observations")]
    NonMonotoneOverhead,
    #[error("accuracy {0} outside [0, 1]")]
    InvalidAccuracy(f64),
    #[error("invalid tuner config: {0}")]
    InvalidConfig(String),
}

impl From<TypeError> for TunerError {
    fn from(e: TypeError) -> Self {
        match e {
            TypeError::ZeroDenominator { component } => Self::ZeroDenominator(component),
            other => Self::InvalidConfig(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunerConfig {
    pub epsilon: f64,
    pub penalty_d: f64,
    pub m_min: usize,
    pub e_min: u32,
    pub m_max: usize,
    pub e_max: u32,
}

impl TunerConfig {
    pub const DEFAULT_EPSILON: f64 = 0.01;
    pub const DEFAULT_PENALTY: f64 = 10.0;
    pub const DEFAULT_E_MAX: u32 = 64;

    /// Defaults for a population of `k_clients`: `M` may grow to `K`.
    pub fn for_population(k_clients: usize) -> Self {
        Self {
            epsilon: Self::DEFAULT_EPSILON,
            penalty_d: Self::DEFAULT_PENALTY,
            m_min: 1,
            e_min: 1,
            m_max: k_clients.max(1),
            e_max: Self::DEFAULT_E_MAX,
        }
    }

    pub fn validate(&self) -> Result<(), TunerError> {
        if !(self.epsilon > 0.0) {
            return Err(TunerError::InvalidConfig(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.penalty_d >= 1.0) {
            return Err(TunerError::InvalidConfig(format!("penalty must be >= 1, got {}", self.penalty_d)));
        }
        if self.m_min == 0 || self.e_min == 0 {
            return Err(TunerError::InvalidConfig("lower bounds must be >= 1".into()));
        }
        if self.m_max < self.m_min || self.e_max < self.e_min {
            return Err(TunerError::InvalidConfig("upper bound below lower bound".into()));
        }
        Ok(())
    }

    pub fn admits(&self, h: HyperParams) -> bool {
        (self.m_min..=self.m_max).contains(&h.m) && (self.e_min..=self.e_max).contains(&h.e)
    }
}

/// One closed interval between activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub hyper: HyperParams,
    pub interval_overhead: OverheadVector,
    pub accuracy: f64,
}

/// Output of one activation.
///
/// The sign fields give the step direction actually taken (`+1` or `-1`;
/// a zero derivative steps down). Warm-up activations keep `(M, E)` and
/// report zero signs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub next: HyperParams,
    pub delta_m: f64,
    pub delta_e: f64,
    pub delta_m_sign: i8,
    pub delta_e_sign: i8,
    pub penalized: bool,
    pub i_value: f64,
    pub warm_up: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunerState {
    /// Rates for (CompT, TransT, CompL, TransL) over `M`.
    pub eta: [f64; 4],
    /// Rates for (CompT, TransT, CompL, TransL) over `E`.
    pub zeta: [f64; 4],
    /// Oldest first; at most three entries.
    pub history: VecDeque<Checkpoint>,
    pub s_cur: HyperParams,
    pub s_prv: HyperParams,
    pub last_activation_accuracy: f64,
    pub last_checkpoint_cumulative: OverheadVector,
    pub last_cumulative: OverheadVector,
}

impl TunerState {
    pub fn new(initial: HyperParams) -> Self {
        Self {
            eta: [1.0; 4],
            zeta: [1.0; 4],
            history: VecDeque::with_capacity(3),
            s_cur: initial,
            s_prv: initial,
            last_activation_accuracy: 0.0,
            last_checkpoint_cumulative: OverheadVector::ZERO,
            last_cumulative: OverheadVector::ZERO,
        }
    }

    fn window(&self) -> Result<(&Checkpoint, &Checkpoint, &Checkpoint), TunerError> {
        match (self.history.len(), self.history.front(), self.history.get(1), self.history.get(2)) {
            (3, Some(a), Some(b), Some(c)) => Ok((a, b, c)),
            (n, ..) => Err(TunerError::InsufficientHistory(n)),
        }
    }

    pub fn record(&mut self, checkpoint: Checkpoint) {
        if self.history.len() == 3 {
            self.history.pop_front();
        }
        self.history.push_back(checkpoint);
    }

    /// Weighted derivative estimate over `M`.
    pub fn delta_m(&self, prefs: &Preferences) -> Result<f64, TunerError> {
        self.weighted_delta(prefs, &self.eta, &M_DIRECTION)
    }

    /// Weighted derivative estimate over `E`.
    pub fn delta_e(&self, prefs: &Preferences) -> Result<f64, TunerError> {
        self.weighted_delta(prefs, &self.zeta, &E_DIRECTION)
    }

    fn weighted_delta(
        &self,
        prefs: &Preferences,
        rates: &[f64; 4],
        direction: &[f64; 4],
    ) -> Result<f64, TunerError> {
        let (_, prv, cur) = self.window()?;
        let weights = prefs.as_array();
        let cur_o = cur.interval_overhead.as_array();
        let prv_o = prv.interval_overhead.as_array();
        let mut total = 0.0;
        for i in 0..4 {
            if weights[i] == 0.0 {
                continue;
            }
            if !(cur_o[i] > 0.0) {
                return Err(TunerError::ZeroDenominator(OVERHEAD_NAMES[i]));
            }
            total += direction[i] * weights[i] * rates[i] * (cur_o[i] - prv_o[i]).abs() / cur_o[i];
        }
        Ok(total)
    }

    /// Refreshes the rates that favour the move from `s_prv` to `s_cur`.
    ///
    /// A rate is the ratio of the latest interval change to the one before
    /// it; when the earlier change is zero the old rate is kept.
    pub fn update_rate_params(&mut self) -> Result<(), TunerError> {
        let (pp, p, c) = self.window()?;
        let ratios: [Option<f64>; 4] = {
            let (pp, p, c) = (
                pp.interval_overhead.as_array(),
                p.interval_overhead.as_array(),
                c.interval_overhead.as_array(),
            );
            [0, 1, 2, 3].map(|i| {
                let (num, denom) = ((c[i] - p[i]).abs(), (p[i] - pp[i]).abs());
                (num > 0.0 && denom > 0.0).then(|| num / denom)
            })
        };
        let m_move = step_direction(self.s_prv.m as f64, self.s_cur.m as f64);
        let e_move = step_direction(self.s_prv.e as f64, self.s_cur.e as f64);
        refresh(&mut self.eta, &ratios, &M_DIRECTION, m_move);
        refresh(&mut self.zeta, &ratios, &E_DIRECTION, e_move);
        Ok(())
    }

    /// Compares the previous interval with the current one. When the current
    /// one is worse (`I > 0`), multiplies the rates opposing the move just
    /// made by `D`. Returns `I`.
    pub fn apply_penalty(&mut self, prefs: &Preferences, cfg: &TunerConfig) -> Result<f64, TunerError> {
        let (_, prv, cur) = self.window()?;
        let i_value = compare(&prv.interval_overhead, &cur.interval_overhead, prefs)?;
        if i_value > 0.0 {
            let m_move = step_direction(self.s_prv.m as f64, self.s_cur.m as f64);
            let e_move = step_direction(self.s_prv.e as f64, self.s_cur.e as f64);
            penalize(&mut self.eta, &M_DIRECTION, m_move, cfg.penalty_d);
            penalize(&mut self.zeta, &E_DIRECTION, e_move, cfg.penalty_d);
        }
        Ok(i_value)
    }

    /// Steps `M` and `E` by one according to the signs of the derivative
    /// estimates, clamped to the configured bounds.
    pub fn decide(&mut self, prefs: &Preferences, cfg: &TunerConfig) -> Result<Decision, TunerError> {
        let delta_m = self.delta_m(prefs)?;
        let delta_e = self.delta_e(prefs)?;
        let (m_sign, e_sign) = (step_sign(delta_m), step_sign(delta_e));
        let m = step_clamped(self.s_cur.m, m_sign, cfg.m_min, cfg.m_max);
        let e = step_clamped(self.s_cur.e as usize, e_sign, cfg.e_min as usize, cfg.e_max as usize) as u32;
        let next = HyperParams { m, e };
        self.s_prv = self.s_cur;
        self.s_cur = next;
        Ok(Decision {
            next,
            delta_m,
            delta_e,
            delta_m_sign: m_sign,
            delta_e_sign: e_sign,
            penalized: false,
            i_value: 0.0,
            warm_up: false,
        })
    }

    /// Feeds one round's accuracy and cumulative overhead.
    ///
    /// Returns `None` unless the accuracy gain since the previous activation
    /// reaches `epsilon`. The first two activations only record history.
    pub fn observe_round(
        &mut self,
        cfg: &TunerConfig,
        prefs: &Preferences,
        accuracy: f64,
        cumulative: OverheadVector,
    ) -> Result<Option<Decision>, TunerError> {
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(TunerError::InvalidAccuracy(accuracy));
        }
        if !cumulative.dominates(&self.last_cumulative) {
            return Err(TunerError::NonMonotoneOverhead);
        }
        self.last_cumulative = cumulative;
        if accuracy - self.last_activation_accuracy + GAIN_SLACK < cfg.epsilon {
            return Ok(None);
        }
        self.record(Checkpoint {
            hyper: self.s_cur,
            interval_overhead: cumulative - self.last_checkpoint_cumulative,
            accuracy,
        });
        self.last_checkpoint_cumulative = cumulative;
        self.last_activation_accuracy = accuracy;

        if self.history.len() < 3 {
            self.s_prv = self.s_cur;
            return Ok(Some(Decision {
                next: self.s_cur,
                delta_m: 0.0,
                delta_e: 0.0,
                delta_m_sign: 0,
                delta_e_sign: 0,
                penalized: false,
                i_value: 0.0,
                warm_up: true,
            }));
        }

        let i_value = self.apply_penalty(prefs, cfg)?;
        self.update_rate_params()?;
        let mut decision = self.decide(prefs, cfg)?;
        decision.i_value = i_value;
        decision.penalized = i_value > 0.0;
        Ok(Some(decision))
    }
}

fn step_direction(prv: f64, cur: f64) -> f64 {
    if cur > prv {
        1.0
    } else if cur < prv {
        -1.0
    } else {
        0.0
    }
}

fn step_sign(delta: f64) -> i8 {
    if delta > 0.0 {
        1
    } else {
        -1
    }
}

fn step_clamped(value: usize, sign: i8, lo: usize, hi: usize) -> usize {
    let stepped = if sign > 0 { value.saturating_add(1) } else { value.saturating_sub(1) };
    stepped.clamp(lo, hi)
}

fn refresh(rates: &mut [f64; 4], ratios: &[Option<f64>; 4], direction: &[f64; 4], moved: f64) {
    if moved == 0.0 {
        return;
    }
    for i in 0..4 {
        if direction[i] == moved {
            if let Some(r) = ratios[i] {
                rates[i] = r;
            }
        }
    }
}

fn penalize(rates: &mut [f64; 4], direction: &[f64; 4], moved: f64, factor: f64) {
    if moved == 0.0 {
        return;
    }
    for i in 0..4 {
        if direction[i] == -moved {
            rates[i] *= factor;
        }
    }
}

/// A tuner bound to its configuration and preferences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FedTune {
    pub config: TunerConfig,
    pub prefs: Preferences,
    pub state: TunerState,
}

impl FedTune {
    pub fn new(config: TunerConfig, prefs: Preferences, initial: HyperParams) -> Result<Self, TunerError> {
        config.validate()?;
        if !config.admits(initial) {
            return Err(TunerError::InvalidConfig(format!(
                "initial {initial} outside bounds M in [{}, {}], E in [{}, {}]",
                config.m_min, config.m_max, config.e_min, config.e_max
            )));
        }
        Ok(Self { config, prefs, state: TunerState::new(initial) })
    }

    pub fn current(&self) -> HyperParams {
        self.state.s_cur
    }

    pub fn observe_round(
        &mut self,
        accuracy: f64,
        cumulative: OverheadVector,
    ) -> Result<Option<Decision>, TunerError> {
        self.state.observe_round(&self.config, &self.prefs, accuracy, cumulative)
    }
}
