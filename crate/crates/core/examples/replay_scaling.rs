//! Replays a tuned run's logged accuracies under rescaled cost constants:
//! the decisions do not change.

use fedtune::data::{generate_synthetic, SyntheticSpec};
use fedtune::sim::{replay_decisions, run_training, RunConfig, TunerSetup};
use fedtune::tuner::TunerConfig;
use fedtune::{CostConstants, Preferences};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_synthetic(&SyntheticSpec::default(), 0)?;
    let setup = TunerSetup { config: TunerConfig::for_population(data.num_clients()), prefs: Preferences::equal() };
    let cfg = RunConfig { tuner: Some(setup.clone()), ..RunConfig::default() };
    let trace = run_training(&cfg, &data)?;
    let costs = trace.summary.costs;
    let steps = |c: CostConstants| -> Result<Vec<String>, Box<dyn std::error::Error>> {
        Ok(replay_decisions(&trace, &setup, &c)?.into_iter().flatten().map(|d| d.next.to_string()).collect())
    };
    let base = steps(costs)?;
    for factor in [7.0, 1e-3, 1e6] {
        println!("costs x{factor}: same decisions = {}", steps(costs.scale(factor)?)? == base);
    }
    println!("decision path: {}", base.join(" "));
    Ok(())
}
