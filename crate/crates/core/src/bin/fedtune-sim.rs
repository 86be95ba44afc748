use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;

use clap::{Parser, Subcommand};
use fedtune::harness::{self, ExperimentConfig, HarnessError, Outcome, OUT_DIR_ENV};

fn defaults_help() -> &'static str {
    static TEXT: OnceLock<String> = OnceLock::new();
    TEXT.get_or_init(|| {
        format!(
            "Exit codes: 0 success, 1 runtime failure, 2 config error (no files written), \
             3 some run hit max_rounds before the target.\n\
             The output directory is --out, else ${OUT_DIR_ENV}, else experiment.output_dir.\n\n\
             Config defaults (every key optional, unknown keys rejected):\n\n{}",
            ExperimentConfig::default_toml()
        )
    })
}

#[derive(Parser)]
#[command(name = "fedtune-sim", version, about = "Federated learning simulator with online (M, E) tuning", after_help = defaults_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of seeds (overrides experiment.repetitions).
    #[arg(long)]
    seeds: Option<usize>,
    /// Worker threads for independent runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured setup once per seed.
    Run(Common),
    /// Fixed-(M, E) grid from the [sweep] section.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Also write normalized M-by-E tables per metric.
        #[arg(long)]
        plot_data: bool,
    },
    /// Baseline versus tuner over the [compare] preference rows.
    Compare(Common),
    /// Write the dataset as CSV and print shard statistics.
    Partition(Common),
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), HarnessError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(n) = common.seeds {
        cfg.experiment.repetitions = n;
    }
    cfg.validate()?;
    if common.jobs == 0 {
        return Err(HarnessError::Config("--jobs must be >= 1".into()));
    }
    let out = harness::resolve_output_dir(common.out.as_deref(), &cfg);
    Ok((cfg, out))
}

fn dispatch(cli: &Cli) -> Result<Outcome, HarnessError> {
    let common = match &cli.command {
        Command::Run(c) | Command::Compare(c) | Command::Partition(c) => c,
        Command::Sweep { common, .. } => common,
    };
    let (cfg, out) = load(common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Run(_) => harness::cmd_run(&cfg, &out),
        Command::Sweep { plot_data, .. } => harness::cmd_sweep(&cfg, &out, *plot_data),
        Command::Compare(_) => harness::cmd_compare(&cfg, &out),
        Command::Partition(_) => {
            let (outcome, stats) = harness::cmd_partition(&cfg, &out)?;
            println!("{stats}");
            Ok(outcome)
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(outcome) => {
            for f in &outcome.files {
                log::debug!("wrote {}", f.display());
            }
            if outcome.runs > 0 {
                log::info!("{} runs, {} exhausted max_rounds", outcome.runs, outcome.exhausted);
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
