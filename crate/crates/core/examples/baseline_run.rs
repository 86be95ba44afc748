//! One fixed-(M, E) training run on the default synthetic task.

use fedtune::data::{generate_synthetic, SyntheticSpec};
use fedtune::sim::{run_training, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_synthetic(&SyntheticSpec::default(), 0)?;
    let trace = run_training(&RunConfig::default(), &data)?;
    for rec in trace.records.iter().step_by(5) {
        println!("round {:3} accuracy {:.3} cumulative CompL {:.3e}", rec.round, rec.accuracy, rec.cumulative.comp_load);
    }
    let s = &trace.summary;
    println!(
        "{} after {} rounds at accuracy {:.3}; totals {:?}",
        s.status.as_str(),
        s.rounds,
        s.final_accuracy,
        s.totals
    );
    Ok(())
}
