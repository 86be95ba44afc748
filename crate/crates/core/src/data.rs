//! Federated datasets: a seeded synthetic non-IID generator, a CSV loader
//! for externally supplied data, and summary statistics.
//!
//! Synthetic features are class-conditional Gaussians around scaled one-hot
//! means. Shard sizes follow a log-normal and each client's label mix is a
//! symmetric Dirichlet draw, so clients are both unbalanced and label-skewed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::derive_seed;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("{file}: row {row}, column `{column}`: {message}")]
    ParseError { file: String, row: usize, column: String, message: String },
    #[error("{file}: {message}")]
    SchemaMismatch { file: String, message: String },
    #[error("{0}: no data rows")]
    EmptyShard(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Plain labelled rows, features stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub input_dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(input_dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self, DataError> {
        if features.len() != input_dim * labels.len() {
            return Err(DataError::InvalidParam(format!(
                "{} feature values for {} rows of width {input_dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self { input_dim, features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.features[r * self.input_dim..(r + 1) * self.input_dim]
    }
}

/// The local data of one client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientShard {
    pub client_id: usize,
    pub input_dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl ClientShard {
    pub fn new(client_id: usize, input_dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self, DataError> {
        if labels.is_empty() {
            return Err(DataError::EmptyShard(format!("client {client_id}")));
        }
        if features.len() != input_dim * labels.len() {
            return Err(DataError::InvalidParam(format!("client {client_id}: ragged features")));
        }
        Ok(Self { client_id, input_dim, features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn as_dataset(&self) -> Dataset {
        Dataset { input_dim: self.input_dim, features: self.features.clone(), labels: self.labels.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederatedDataset {
    pub shards: Vec<ClientShard>,
    pub test_set: Dataset,
    pub num_classes: usize,
    pub input_dim: usize,
}

impl FederatedDataset {
    pub fn num_clients(&self) -> usize {
        self.shards.len()
    }

    pub fn total_points(&self) -> usize {
        self.shards.iter().map(ClientShard::len).sum()
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        self.shards.iter().map(ClientShard::len).collect()
    }
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub k_clients: usize,
    pub num_classes: usize,
    pub input_dim: usize,
    pub mean_shard_size: usize,
    /// Log-normal sigma of the shard sizes; 0 gives equal shards.
    pub size_skew: f64,
    /// Dirichlet concentration of each client's label mix.
    pub label_alpha: f64,
    /// Standard deviation of the isotropic feature noise.
    pub noise: f64,
    /// Length of each class mean vector.
    pub mean_scale: f64,
    pub test_size: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            k_clients: 200,
            num_classes: 10,
            input_dim: 32,
            mean_shard_size: 30,
            size_skew: 0.5,
            label_alpha: 0.1,
            noise: 0.7,
            mean_scale: 2.0,
            test_size: 2000,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidParam(m.to_string()));
        if self.k_clients == 0 {
            return bad("k_clients must be >= 1");
        }
        if self.num_classes < 2 {
            return bad("num_classes must be >= 2");
        }
        if self.input_dim < self.num_classes {
            return bad("input_dim must be at least num_classes (one-hot class means)");
        }
        if self.mean_shard_size == 0 {
            return bad("mean_shard_size must be >= 1");
        }
        if !(self.size_skew >= 0.0) || !self.size_skew.is_finite() {
            return bad("size_skew must be >= 0");
        }
        if !(self.label_alpha > 0.0) || !self.label_alpha.is_finite() {
            return bad("label_alpha must be > 0");
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return bad("noise must be >= 0");
        }
        if !(self.mean_scale > 0.0) {
            return bad("mean_scale must be > 0");
        }
        if self.test_size == 0 {
            return bad("test_size must be >= 1");
        }
        Ok(())
    }
}

fn sample_point(
    spec: &SyntheticSpec,
    class: usize,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<f64>,
) {
    for j in 0..spec.input_dim {
        let mean = if j == class { spec.mean_scale } else { 0.0 };
        let z: f64 = StandardNormal.sample(rng);
        out.push(mean + spec.noise * z);
    }
}

/// Symmetric Dirichlet draw via normalized Gamma variates.
fn dirichlet(alpha: f64, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let mut w: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = w.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        w.iter_mut().for_each(|x| *x /= sum);
    } else {
        // every variate underflowed: fall back to a single class
        let pick = rng.random_range(0..k);
        w.iter_mut().enumerate().for_each(|(i, x)| *x = if i == pick { 1.0 } else { 0.0 });
    }
    w
}

/// Seeded synthetic federated dataset.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<FederatedDataset, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "data.shards", 0));

    let sizes: Vec<usize> = if spec.size_skew == 0.0 {
        vec![spec.mean_shard_size; spec.k_clients]
    } else {
        // mean-preserving log-normal
        let mu = (spec.mean_shard_size as f64).ln() - 0.5 * spec.size_skew * spec.size_skew;
        let dist = LogNormal::new(mu, spec.size_skew).map_err(|e| DataError::InvalidParam(e.to_string()))?;
        (0..spec.k_clients)
            .map(|_| (dist.sample(&mut rng).round() as usize).max(1))
            .collect()
    };

    let mut shards = Vec::with_capacity(spec.k_clients);
    for (client_id, &n_k) in sizes.iter().enumerate() {
        let mix = dirichlet(spec.label_alpha, spec.num_classes, &mut rng);
        let pick = WeightedIndex::new(&mix).map_err(|e| DataError::InvalidParam(e.to_string()))?;
        let mut features = Vec::with_capacity(n_k * spec.input_dim);
        let mut labels = Vec::with_capacity(n_k);
        for _ in 0..n_k {
            let class = pick.sample(&mut rng);
            labels.push(class);
            sample_point(spec, class, &mut rng, &mut features);
        }
        shards.push(ClientShard { client_id, input_dim: spec.input_dim, features, labels });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "data.test", 0));
    let mut features = Vec::with_capacity(spec.test_size * spec.input_dim);
    let mut labels = Vec::with_capacity(spec.test_size);
    for _ in 0..spec.test_size {
        let class = rng.random_range(0..spec.num_classes);
        labels.push(class);
        sample_point(spec, class, &mut rng, &mut features);
    }

    Ok(FederatedDataset {
        shards,
        test_set: Dataset { input_dim: spec.input_dim, features, labels },
        num_classes: spec.num_classes,
        input_dim: spec.input_dim,
    })
}

struct ParsedTable {
    client: Vec<String>,
    labels: Vec<usize>,
    features: Vec<f64>,
    feature_names: Vec<String>,
}

fn read_table(path: &Path, client_column: &str, label_column: &str) -> Result<ParsedTable, DataError> {
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| DataError::SchemaMismatch {
            file: file.clone(),
            message: format!("missing column `{name}`"),
        })
    };
    let client_idx = find(client_column)?;
    let label_idx = find(label_column)?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|i| *i != client_idx && *i != label_idx).collect();
    let feature_names = feature_cols.iter().map(|&i| headers[i].to_string()).collect();

    let mut table = ParsedTable { client: Vec::new(), labels: Vec::new(), features: Vec::new(), feature_names };
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        // header is line 1
        let row = r + 2;
        let cell = |i: usize| record.get(i).unwrap_or("");
        if record.len() != headers.len() {
            return Err(DataError::SchemaMismatch {
                file: file.clone(),
                message: format!("row {row} has {} fields, header has {}", record.len(), headers.len()),
            });
        }
        table.client.push(cell(client_idx).to_string());
        let label = cell(label_idx).trim().parse::<usize>().map_err(|e| DataError::ParseError {
            file: file.clone(),
            row,
            column: label_column.to_string(),
            message: format!("`{}`: {e}", cell(label_idx)),
        })?;
        table.labels.push(label);
        for &i in &feature_cols {
            let v = cell(i).trim().parse::<f64>().map_err(|e| DataError::ParseError {
                file: file.clone(),
                row,
                column: headers[i].to_string(),
                message: format!("`{}`: {e}", cell(i)),
            })?;
            table.features.push(v);
        }
    }
    Ok(table)
}

/// Loads a federated dataset from two CSV files sharing one header.
///
/// Training rows are grouped into shards by `client_column`; shards are
/// ordered numerically when every client id is an integer, otherwise
/// lexicographically. The client column of the test file is ignored.
pub fn load_csv(
    train_path: &Path,
    test_path: &Path,
    client_column: &str,
    label_column: &str,
) -> Result<FederatedDataset, DataError> {
    let train = read_table(train_path, client_column, label_column)?;
    let test = read_table(test_path, client_column, label_column)?;
    if train.feature_names != test.feature_names {
        return Err(DataError::SchemaMismatch {
            file: test_path.display().to_string(),
            message: "feature columns differ from the training file".into(),
        });
    }
    if train.labels.is_empty() {
        return Err(DataError::EmptyShard(train_path.display().to_string()));
    }
    if test.labels.is_empty() {
        return Err(DataError::EmptyShard(test_path.display().to_string()));
    }
    let input_dim = train.feature_names.len();
    if input_dim == 0 {
        return Err(DataError::SchemaMismatch {
            file: train_path.display().to_string(),
            message: "no feature columns".into(),
        });
    }

    let numeric = train.client.iter().all(|c| c.trim().parse::<i64>().is_ok());
    let mut groups: BTreeMap<(i64, String), Vec<usize>> = BTreeMap::new();
    for (row, c) in train.client.iter().enumerate() {
        let key = if numeric { (c.trim().parse::<i64>().unwrap_or(0), String::new()) } else { (0, c.clone()) };
        groups.entry(key).or_default().push(row);
    }
    let shards = groups
        .into_values()
        .enumerate()
        .map(|(client_id, rows)| {
            let features = rows
                .iter()
                .flat_map(|&r| train.features[r * input_dim..(r + 1) * input_dim].iter().copied())
                .collect();
            let labels = rows.iter().map(|&r| train.labels[r]).collect();
            ClientShard::new(client_id, input_dim, features, labels)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let num_classes = train.labels.iter().chain(&test.labels).copied().max().unwrap_or(0) + 1;
    Ok(FederatedDataset {
        shards,
        test_set: Dataset { input_dim, features: test.features, labels: test.labels },
        num_classes,
        input_dim,
    })
}

/// Writes a dataset as `client,label,x0,..` CSV files readable by [`load_csv`].
pub fn write_csv(d: &FederatedDataset, train_path: &Path, test_path: &Path) -> Result<(), DataError> {
    let header = |w: &mut dyn Write| -> std::io::Result<()> {
        write!(w, "client,label")?;
        for j in 0..d.input_dim {
            write!(w, ",x{j}")?;
        }
        writeln!(w)
    };
    let row = |w: &mut dyn Write, client: &str, label: usize, x: &[f64]| -> std::io::Result<()> {
        write!(w, "{client},{label}")?;
        for v in x {
            write!(w, ",{v}")?;
        }
        writeln!(w)
    };

    let mut w = std::io::BufWriter::new(File::create(train_path)?);
    header(&mut w)?;
    for shard in &d.shards {
        let id = shard.client_id.to_string();
        for r in 0..shard.len() {
            row(&mut w, &id, shard.labels[r], &shard.features[r * d.input_dim..(r + 1) * d.input_dim])?;
        }
    }
    w.flush()?;

    let mut w = std::io::BufWriter::new(File::create(test_path)?);
    header(&mut w)?;
    for r in 0..d.test_set.len() {
        row(&mut w, "test", d.test_set.labels[r], d.test_set.row(r))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardStats {
    pub k: usize,
    pub n: usize,
    pub min: usize,
    pub median: f64,
    pub max: usize,
    /// Training points per class.
    pub class_counts: Vec<usize>,
    pub test_size: usize,
}

pub fn shard_stats(d: &FederatedDataset) -> ShardStats {
    let mut sizes = d.shard_sizes();
    sizes.sort_unstable();
    let k = sizes.len();
    let median = match k {
        0 => 0.0,
        _ if k % 2 == 1 => sizes[k / 2] as f64,
        _ => (sizes[k / 2 - 1] + sizes[k / 2]) as f64 / 2.0,
    };
    let mut class_counts = vec![0; d.num_classes];
    for shard in &d.shards {
        for &l in &shard.labels {
            if l < class_counts.len() {
                class_counts[l] += 1;
            }
        }
    }
    ShardStats {
        k,
        n: sizes.iter().sum(),
        min: sizes.first().copied().unwrap_or(0),
        median,
        max: sizes.last().copied().unwrap_or(0),
        class_counts,
        test_size: d.test_set.len(),
    }
}

impl fmt::Display for ShardStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "clients (K):      {}", self.k)?;
        writeln!(f, "training points:  {}", self.n)?;
        writeln!(f, "shard size:       min {} / median {} / max {}", self.min, self.median, self.max)?;
        writeln!(f, "test points:      {}", self.test_size)?;
        write!(f, "per-class counts: {:?}", self.class_counts)
    }
}
