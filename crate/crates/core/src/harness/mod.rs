//! Experiment harness behind the `fedtune-sim` binary.
//!
//! Four commands share one TOML configuration:
//!
//! * [`cmd_run`] trains one configuration for every seed and writes a trace
//!   per seed plus `summary.csv`.
//! * [`cmd_sweep`] runs the fixed-`(M, E)` grid of the measurement study and
//!   writes `sweep.csv` with totals normalized by the grid minimum.
//! * [`cmd_compare`] runs the fixed baseline and one tuned run per preference
//!   row and seed, then writes `compare_runs.csv` and `compare_report.csv`.
//! * [`cmd_partition`] materializes the dataset as CSV and prints its shard
//!   statistics.
//!
//! Every configuration problem is detected before the output directory is
//! created, so a config error leaves no files behind.

pub mod config;
pub mod report;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::ExperimentConfig;
pub use report::{build_report, mean_std, ReportRow};

use crate::data::{load_csv, shard_stats, write_csv, FederatedDataset, ShardStats};
use crate::sim::{run_training, RunConfig, RunStatus, SimError, TraceSummary, TrainingTrace};
use crate::types::{LocalPasses, OverheadVector, Preferences};

/// Environment variable that overrides `experiment.output_dir`.
pub const OUT_DIR_ENV: &str = "FEDTUNE_OUT_DIR";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error("partition round trip changed the shard sizes")]
    RoundTrip,
}

impl HarnessError {
    /// Process exit code for this error: 2 for configuration problems,
    /// 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// One run in a CSV table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub pref_alpha: Option<f64>,
    pub pref_beta: Option<f64>,
    pub pref_gamma: Option<f64>,
    pub pref_delta: Option<f64>,
    pub seed: u64,
    pub comp_time: f64,
    pub trans_time: f64,
    pub comp_load: f64,
    pub trans_load: f64,
    pub final_m: usize,
    pub final_e: f64,
    pub rounds: usize,
    pub status: RunStatus,
}

impl SummaryRow {
    pub fn new(prefs: Option<&Preferences>, s: &TraceSummary) -> Self {
        let p = prefs.map(|p| p.as_array());
        Self {
            pref_alpha: p.map(|p| p[0]),
            pref_beta: p.map(|p| p[1]),
            pref_gamma: p.map(|p| p[2]),
            pref_delta: p.map(|p| p[3]),
            seed: s.seed,
            comp_time: s.totals.comp_time,
            trans_time: s.totals.trans_time,
            comp_load: s.totals.comp_load,
            trans_load: s.totals.trans_load,
            final_m: s.final_m,
            final_e: s.final_e.as_f64(),
            rounds: s.rounds,
            status: s.status,
        }
    }

    pub fn totals(&self) -> OverheadVector {
        OverheadVector::new(self.comp_time, self.trans_time, self.comp_load, self.trans_load)
    }

    pub fn prefs(&self) -> Option<[f64; 4]> {
        Some([self.pref_alpha?, self.pref_beta?, self.pref_gamma?, self.pref_delta?])
    }
}

/// One grid point of a sweep, with totals normalized by the grid minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub e: f64,
    pub seed: u64,
    pub comp_time: f64,
    pub trans_time: f64,
    pub comp_load: f64,
    pub trans_load: f64,
    pub rounds: usize,
    pub status: RunStatus,
    pub norm_comp_time: f64,
    pub norm_trans_time: f64,
    pub norm_comp_load: f64,
    pub norm_trans_load: f64,
}

impl SweepRow {
    pub fn totals(&self) -> OverheadVector {
        OverheadVector::new(self.comp_time, self.trans_time, self.comp_load, self.trans_load)
    }
}

/// Writes `rows` as CSV preceded by the schema comment line.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# schema_version={SCHEMA_VERSION}").map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Csv { path: path.to_path_buf(), message: e.to_string() })?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Reads a table written by [`write_rows`], checking the schema version.
pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let csv_err = |message: String| HarnessError::Csv { path: path.to_path_buf(), message };
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let first = text.lines().next().unwrap_or_default();
    let version = first
        .strip_prefix("# schema_version=")
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| csv_err("missing schema_version line".into()))?;
    if version != SCHEMA_VERSION {
        return Err(csv_err(format!("schema version {version}, expected {SCHEMA_VERSION}")));
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(|e| csv_err(e.to_string()))).collect()
}

pub fn write_trace(path: &Path, trace: &TrainingTrace) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    trace.write_jsonl(&mut w)?;
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<TrainingTrace, HarnessError> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(TrainingTrace::read_jsonl(BufReader::new(file))?)
}

/// Output directory precedence: explicit flag, then [`OUT_DIR_ENV`], then
/// the config file.
pub fn resolve_output_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.experiment.output_dir.clone(),
    }
}

/// What a command produced.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Runs that stopped at `max_rounds` without reaching the target.
    pub exhausted: usize,
    pub runs: usize,
}

impl Outcome {
    /// 0 when every run reached its target, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.exhausted > 0 {
            3
        } else {
            0
        }
    }
}

struct Job {
    cfg: RunConfig,
    trace_name: String,
}

fn check_jobs(jobs: &[Job], data: &FederatedDataset) -> Result<(), HarnessError> {
    for j in jobs {
        j.cfg.validate(data).map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    Ok(())
}

fn create_dir(out: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(out).map_err(io_err(out))
}

/// Runs every job on the current rayon pool, then writes the traces in job
/// order.
fn execute(jobs: &[Job], data: &FederatedDataset, trace_dir: &Path, outcome: &mut Outcome) -> Result<Vec<TraceSummary>, HarnessError> {
    let traces: Vec<TrainingTrace> =
        jobs.par_iter().map(|j| run_training(&j.cfg, data)).collect::<Result<_, _>>()?;
    let mut summaries = Vec::with_capacity(traces.len());
    for (j, t) in jobs.iter().zip(traces) {
        let path = trace_dir.join(&j.trace_name);
        write_trace(&path, &t)?;
        outcome.files.push(path);
        outcome.runs += 1;
        if t.summary.status == RunStatus::ExhaustedMaxRounds {
            outcome.exhausted += 1;
            log::warn!("{} exhausted {} rounds at accuracy {:.4}", j.trace_name, t.summary.rounds, t.summary.final_accuracy);
        }
        summaries.push(t.summary);
    }
    Ok(summaries)
}

/// Trains the configured setup once per seed.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, HarnessError> {
    cfg.validate()?;
    let data = cfg.dataset()?;
    let prefs = if cfg.tuner.enabled { Some(cfg.preferences()?) } else { None };
    let jobs: Vec<Job> = cfg
        .seeds()
        .into_iter()
        .map(|s| Job { cfg: cfg.run_config(s, data.num_clients(), prefs), trace_name: format!("trace_seed{s}.jsonl") })
        .collect();
    check_jobs(&jobs, &data)?;
    create_dir(out)?;

    let mut outcome = Outcome::default();
    let summaries = execute(&jobs, &data, out, &mut outcome)?;
    let rows: Vec<SummaryRow> = summaries.iter().map(|s| SummaryRow::new(prefs.as_ref(), s)).collect();
    let path = out.join("summary.csv");
    write_rows(&path, &rows)?;
    outcome.files.push(path);
    Ok(outcome)
}

/// Normalizes each metric by its minimum over `rows`.
pub fn normalize(rows: &mut [SweepRow]) {
    let min = |f: fn(&SweepRow) -> f64| rows.iter().map(f).fold(f64::INFINITY, f64::min);
    let mins = [min(|r| r.comp_time), min(|r| r.trans_time), min(|r| r.comp_load), min(|r| r.trans_load)];
    for r in rows.iter_mut() {
        r.norm_comp_time = r.comp_time / mins[0];
        r.norm_trans_time = r.trans_time / mins[1];
        r.norm_comp_load = r.comp_load / mins[2];
        r.norm_trans_load = r.trans_load / mins[3];
    }
}

/// A CSV table as `(file stem, header, rows)`.
pub type Table = (String, Vec<String>, Vec<Vec<String>>);

/// Mean normalized value per `(M, E)` cell, one table per metric.
pub fn plot_tables(rows: &[SweepRow], ms: &[usize], es: &[f64]) -> Vec<Table> {
    type Metric = (&'static str, fn(&SweepRow) -> f64);
    let metrics: [Metric; 4] = [
        ("comp_time", |r| r.norm_comp_time),
        ("trans_time", |r| r.norm_trans_time),
        ("comp_load", |r| r.norm_comp_load),
        ("trans_load", |r| r.norm_trans_load),
    ];
    metrics
        .iter()
        .map(|(name, f)| {
            let mut header = vec!["m".to_string()];
            header.extend(es.iter().map(|e| format!("e={e}")));
            let body = ms
                .iter()
                .map(|&m| {
                    let mut line = vec![m.to_string()];
                    for &e in es {
                        let cell: Vec<f64> = rows.iter().filter(|r| r.m == m && r.e == e).map(f).collect();
                        line.push((cell.iter().sum::<f64>() / cell.len() as f64).to_string());
                    }
                    line
                })
                .collect();
            (format!("plot_{name}"), header, body)
        })
        .collect()
}

/// Runs every `(M, E)` of the sweep grid for every seed, tuner off.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, plot_data: bool) -> Result<Outcome, HarnessError> {
    cfg.validate()?;
    let data = cfg.dataset()?;
    let mut jobs = Vec::new();
    let mut grid = Vec::new();
    for &m in &cfg.sweep.m {
        for &e in &cfg.sweep.e {
            let passes = LocalPasses::from_f64(e).map_err(|err| HarnessError::Config(err.to_string()))?;
            for s in cfg.seeds() {
                let mut rc = cfg.run_config(s, data.num_clients(), None);
                rc.initial_m = m;
                rc.initial_e = passes;
                jobs.push(Job { cfg: rc, trace_name: format!("sweep_m{m}_e{e}_seed{s}.jsonl") });
                grid.push((m, e));
            }
        }
    }
    check_jobs(&jobs, &data)?;
    let trace_dir = out.join("traces");
    create_dir(&trace_dir)?;

    let mut outcome = Outcome::default();
    let summaries = execute(&jobs, &data, &trace_dir, &mut outcome)?;
    let mut rows: Vec<SweepRow> = grid
        .iter()
        .zip(&summaries)
        .map(|(&(m, e), s)| SweepRow {
            m,
            e,
            seed: s.seed,
            comp_time: s.totals.comp_time,
            trans_time: s.totals.trans_time,
            comp_load: s.totals.comp_load,
            trans_load: s.totals.trans_load,
            rounds: s.rounds,
            status: s.status,
            norm_comp_time: 0.0,
            norm_trans_time: 0.0,
            norm_comp_load: 0.0,
            norm_trans_load: 0.0,
        })
        .collect();
    normalize(&mut rows);
    let path = out.join("sweep.csv");
    write_rows(&path, &rows)?;
    outcome.files.push(path);

    if plot_data || cfg.sweep.plot_data {
        for (stem, header, body) in plot_tables(&rows, &cfg.sweep.m, &cfg.sweep.e) {
            let path = out.join(format!("{stem}.csv"));
            let csv_err = |e: csv::Error| HarnessError::Csv { path: path.clone(), message: e.to_string() };
            let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
            w.write_record(&header).map_err(csv_err)?;
            for line in body {
                w.write_record(&line).map_err(csv_err)?;
            }
            w.flush().map_err(io_err(&path))?;
            outcome.files.push(path);
        }
    }
    Ok(outcome)
}

/// Baseline versus tuner for every preference row.
pub fn cmd_compare(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, HarnessError> {
    cfg.validate()?;
    let data = cfg.dataset()?;
    let grid = cfg.compare_grid()?;
    let k = data.num_clients();
    let mut jobs = Vec::new();
    let mut arms: Vec<Option<Preferences>> = Vec::new();
    for s in cfg.seeds() {
        jobs.push(Job { cfg: cfg.run_config(s, k, None), trace_name: format!("baseline_seed{s}.jsonl") });
        arms.push(None);
    }
    for (i, p) in grid.iter().enumerate() {
        for s in cfg.seeds() {
            jobs.push(Job { cfg: cfg.run_config(s, k, Some(*p)), trace_name: format!("pref{i:02}_seed{s}.jsonl") });
            arms.push(Some(*p));
        }
    }
    check_jobs(&jobs, &data)?;
    let trace_dir = out.join("traces");
    create_dir(&trace_dir)?;

    let mut outcome = Outcome::default();
    let summaries = execute(&jobs, &data, &trace_dir, &mut outcome)?;
    let rows: Vec<SummaryRow> = arms.iter().zip(&summaries).map(|(p, s)| SummaryRow::new(p.as_ref(), s)).collect();
    let runs_path = out.join("compare_runs.csv");
    write_rows(&runs_path, &rows)?;
    outcome.files.push(runs_path);

    let report = build_report(&rows, &grid)?;
    let report_path = out.join("compare_report.csv");
    write_rows(&report_path, &report)?;
    outcome.files.push(report_path);
    Ok(outcome)
}

/// Writes the configured dataset as `train.csv` / `test.csv`, reloads it and
/// checks the shard sizes survived.
pub fn cmd_partition(cfg: &ExperimentConfig, out: &Path) -> Result<(Outcome, ShardStats), HarnessError> {
    cfg.validate()?;
    let data = cfg.dataset()?;
    create_dir(out)?;
    let (train, test) = (out.join("train.csv"), out.join("test.csv"));
    write_csv(&data, &train, &test)?;
    let back = load_csv(&train, &test, "client", "label")?;
    if back.shard_sizes() != data.shard_sizes() || back.test_set.len() != data.test_set.len() {
        return Err(HarnessError::RoundTrip);
    }
    let stats = shard_stats(&data);
    let stats_path = out.join("shard_stats.json");
    let json = serde_json::to_string_pretty(&stats).map_err(|e| HarnessError::Csv { path: stats_path.clone(), message: e.to_string() })?;
    fs::write(&stats_path, json + "\n").map_err(io_err(&stats_path))?;
    Ok((Outcome { files: vec![train, test, stats_path], exhausted: 0, runs: 0 }, stats))
}
