//! Declarative experiment configuration (TOML).
//!
//! Every section is optional and every key has a default; unknown keys are
//! rejected. `ExperimentConfig::default_toml()` renders the full default file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::data::{generate_synthetic, load_csv, FederatedDataset, SyntheticSpec};
use crate::model::SgdOptions;
use crate::sim::{AggregatorKind, RunConfig, TunerSetup};
use crate::tuner::TunerConfig;
use crate::types::{CostConstants, LocalPasses, Preferences};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub name: String,
    pub output_dir: PathBuf,
    /// Seeds per configuration; run `i` uses seed `seed + i`.
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { name: "fedtune".into(), output_dir: PathBuf::from("fedtune-out"), repetitions: 3, seed: 0 }
    }
}

/// Externally supplied dataset; replaces the synthetic generator when set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSection {
    pub train: PathBuf,
    pub test: PathBuf,
    #[serde(default = "default_client_column")]
    pub client_column: String,
    #[serde(default = "default_label_column")]
    pub label_column: String,
}

fn default_client_column() -> String {
    "client".into()
}

fn default_label_column() -> String {
    "label".into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Seed of the synthetic generator, shared by all repetitions.
    pub seed: u64,
    pub synthetic: SyntheticSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { hidden_dim: RunConfig::default().hidden_dim }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub initial_m: usize,
    pub initial_e: LocalPasses,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub target_accuracy: f64,
    pub max_rounds: usize,
    /// Train the participants of a round concurrently.
    pub parallel: bool,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let r = RunConfig::default();
        Self {
            initial_m: r.initial_m,
            initial_e: r.initial_e,
            batch_size: r.sgd.batch_size,
            lr: r.sgd.lr,
            momentum: r.sgd.momentum,
            target_accuracy: r.target_accuracy,
            max_rounds: r.max_rounds,
            parallel: r.parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorName {
    FedAvg,
    FedNova,
    FedAdagrad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AggregatorSection {
    pub kind: AggregatorName,
    /// Server learning rate (fedadagrad only).
    pub lr: f64,
    pub beta1: f64,
    pub tau: f64,
}

impl Default for AggregatorSection {
    fn default() -> Self {
        match AggregatorKind::fedadagrad_default() {
            AggregatorKind::FedAdagrad { lr, beta1, tau } => Self { kind: AggregatorName::FedAvg, lr, beta1, tau },
            _ => unreachable!(),
        }
    }
}

impl AggregatorSection {
    pub fn kind(&self) -> AggregatorKind {
        match self.kind {
            AggregatorName::FedAvg => AggregatorKind::FedAvg,
            AggregatorName::FedNova => AggregatorKind::FedNova,
            AggregatorName::FedAdagrad => AggregatorKind::FedAdagrad { lr: self.lr, beta1: self.beta1, tau: self.tau },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TunerSection {
    /// Attach the tuner in `run`; `compare` always runs both arms.
    pub enabled: bool,
    /// `[alpha, beta, gamma, delta]`.
    pub preferences: [f64; 4],
    pub epsilon: f64,
    pub penalty_d: f64,
    pub m_min: usize,
    pub e_min: u32,
    /// Defaults to the client count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_max: Option<usize>,
    pub e_max: u32,
}

impl Default for TunerSection {
    fn default() -> Self {
        let t = TunerConfig::for_population(1);
        Self {
            enabled: false,
            preferences: [0.25; 4],
            epsilon: t.epsilon,
            penalty_d: t.penalty_d,
            m_min: t.m_min,
            e_min: t.e_min,
            m_max: None,
            e_max: t.e_max,
        }
    }
}

impl TunerSection {
    pub fn tuner_config(&self, k_clients: usize) -> TunerConfig {
        TunerConfig {
            epsilon: self.epsilon,
            penalty_d: self.penalty_d,
            m_min: self.m_min,
            e_min: self.e_min,
            m_max: self.m_max.unwrap_or(k_clients),
            e_max: self.e_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub m: Vec<usize>,
    pub e: Vec<f64>,
    /// Also write one normalized M-by-E table per metric.
    pub plot_data: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { m: vec![1, 5, 20], e: vec![1.0, 2.0, 4.0], plot_data: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    /// Preference rows `[alpha, beta, gamma, delta]`; empty means the
    /// standard 15-row grid.
    pub preferences: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub data: DataSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub aggregator: AggregatorSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub costs: Option<CostSection>,
    pub tuner: TunerSection,
    pub sweep: SweepSection,
    pub compare: CompareSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn default_toml() -> String {
        toml::to_string(&Self::default()).expect("default config serializes")
    }

    /// Checks everything that does not need the dataset.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.experiment.repetitions == 0 {
            return bad("experiment.repetitions must be >= 1".into());
        }
        if self.data.csv.is_none() {
            self.data.synthetic.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        self.sgd().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.aggregator.kind().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(c) = self.costs {
            CostConstants::new(c.c1, c.c2, c.c3, c.c4).map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        let t = &self.training;
        if !(0.0..=1.0).contains(&t.target_accuracy) {
            return bad(format!("training.target_accuracy {} outside [0, 1]", t.target_accuracy));
        }
        if t.max_rounds == 0 {
            return bad("training.max_rounds must be >= 1".into());
        }
        if t.initial_m == 0 {
            return bad("training.initial_m must be >= 1".into());
        }
        self.preferences()?;
        self.compare_grid()?;
        if self.sweep.m.is_empty() || self.sweep.e.is_empty() {
            return bad("sweep.m and sweep.e must be nonempty".into());
        }
        if self.sweep.m.contains(&0) {
            return bad("sweep.m entries must be >= 1".into());
        }
        for &e in &self.sweep.e {
            LocalPasses::from_f64(e).map_err(|err| HarnessError::Config(format!("sweep.e: {err}")))?;
        }
        Ok(())
    }

    pub fn preferences(&self) -> Result<Preferences, HarnessError> {
        Preferences::from_array(self.tuner.preferences).map_err(|e| HarnessError::Config(format!("tuner.preferences: {e}")))
    }

    pub fn compare_grid(&self) -> Result<Vec<Preferences>, HarnessError> {
        if self.compare.preferences.is_empty() {
            return Ok(Preferences::standard_grid());
        }
        self.compare
            .preferences
            .iter()
            .map(|p| Preferences::from_array(*p).map_err(|e| HarnessError::Config(format!("compare.preferences: {e}"))))
            .collect()
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.experiment.repetitions as u64).map(|i| self.experiment.seed + i).collect()
    }

    fn sgd(&self) -> SgdOptions {
        SgdOptions { batch_size: self.training.batch_size, lr: self.training.lr, momentum: self.training.momentum }
    }

    pub fn dataset(&self) -> Result<FederatedDataset, HarnessError> {
        let data = match &self.data.csv {
            Some(c) => load_csv(&c.train, &c.test, &c.client_column, &c.label_column),
            None => generate_synthetic(&self.data.synthetic, self.data.seed),
        };
        data.map_err(|e| HarnessError::Config(format!("dataset: {e}")))
    }

    /// Run configuration for one seed; `prefs` attaches the tuner.
    pub fn run_config(&self, seed: u64, k_clients: usize, prefs: Option<Preferences>) -> RunConfig {
        RunConfig {
            hidden_dim: self.model.hidden_dim,
            initial_m: self.training.initial_m,
            initial_e: self.training.initial_e,
            aggregator: self.aggregator.kind(),
            sgd: self.sgd(),
            target_accuracy: self.training.target_accuracy,
            max_rounds: self.training.max_rounds,
            tuner: prefs.map(|p| TunerSetup { config: self.tuner.tuner_config(k_clients), prefs: p }),
            costs: self.costs.map(|c| CostConstants { c1: c.c1, c2: c.c2, c3: c.c3, c4: c.c4 }),
            seed,
            parallel: self.training.parallel,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_toml_round_trips() {
        let text = ExperimentConfig::default_toml();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str("[training]\nlearning_rate = 0.1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[trainig]\nlr = 0.1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[data.synthetic]\nclients = 3\n").is_err());
    }

    #[test]
    fn sections_parse() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            [experiment]
            repetitions = 2
            [training]
            initial_e = 0.5
            [aggregator]
            kind = "fedadagrad"
            lr = 0.05
            [tuner]
            enabled = true
            preferences = [0.33, 0.33, 0.33, 0.0]
            [costs]
            c1 = 1.0
            c2 = 2.0
            c3 = 3.0
            c4 = 4.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seeds(), vec![0, 1]);
        assert_eq!(cfg.training.initial_e, LocalPasses::Fraction(0.5));
        assert_eq!(cfg.aggregator.kind(), AggregatorKind::FedAdagrad { lr: 0.05, beta1: 0.0, tau: 1e-3 });
        let p = cfg.preferences().unwrap();
        assert!((p.as_array().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [
            "[experiment]\nrepetitions = 0\n",
            "[tuner]\npreferences = [0.5, 0.6, 0.0, 0.0]\n",
            "[training]\ntarget_accuracy = 1.5\n",
            "[training]\ninitial_e = -1\n",
            "[aggregator]\nkind = \"fedsgd\"\n",
            "[sweep]\nm = []\n",
        ] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }
}
