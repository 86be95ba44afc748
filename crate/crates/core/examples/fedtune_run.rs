//! Training with the (M, E) tuner for each pure preference, against the
//! fixed-(M, E) baseline.

use fedtune::data::{generate_synthetic, SyntheticSpec};
use fedtune::sim::{run_training, RunConfig, TunerSetup};
use fedtune::tuner::TunerConfig;
use fedtune::{compare, Preferences};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_synthetic(&SyntheticSpec::default(), 0)?;
    let baseline = run_training(&RunConfig::default(), &data)?;
    println!("baseline: {} rounds, totals {:?}", baseline.summary.rounds, baseline.summary.totals);

    let names = ["CompT", "TransT", "CompL", "TransL"];
    for (i, name) in names.iter().enumerate() {
        let mut w = [0.0; 4];
        w[i] = 1.0;
        let prefs = Preferences::from_array(w)?;
        let cfg = RunConfig {
            tuner: Some(TunerSetup { config: TunerConfig::for_population(data.num_clients()), prefs }),
            ..RunConfig::default()
        };
        let t = run_training(&cfg, &data)?;
        let path: Vec<String> = t.decisions().filter(|(_, d)| !d.warm_up).map(|(_, d)| d.next.to_string()).collect();
        let score = -compare(&baseline.summary.totals, &t.summary.totals, &prefs)? * 100.0;
        println!(
            "only {name:6}: {} rounds, final {} / {}, {score:+.1}% vs baseline; path {}",
            t.summary.rounds,
            t.summary.final_m,
            t.summary.final_e,
            path.join(" ")
        );
    }
    Ok(())
}
