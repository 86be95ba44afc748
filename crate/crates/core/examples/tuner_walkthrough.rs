//! Drives the (M, E) tuner with a hand-made observation stream and prints
//! every activation.

use fedtune::tuner::{FedTune, TunerConfig};
use fedtune::{HyperParams, OverheadVector, Preferences};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prefs = Preferences::new(0.0, 0.0, 1.0, 0.0)?;
    let config = TunerConfig::for_population(50);
    let mut tuner = FedTune::new(config, prefs, HyperParams::new(20, 20)?)?;

    let mut cumulative = OverheadVector::ZERO;
    let mut accuracy: f64 = 0.0;
    for round in 1..=24 {
        let hp = tuner.current();
        // interval cost grows with M and E, so lowering both pays off
        let per_round = OverheadVector::new(
            30.0 * hp.e as f64,
            1.0,
            25.0 * (hp.m * hp.e as usize) as f64,
            hp.m as f64,
        );
        cumulative = cumulative + per_round;
        accuracy = (accuracy + 0.012).min(1.0);
        if let Some(d) = tuner.observe_round(accuracy, cumulative)? {
            let tag = if d.warm_up { "warm-up" } else if d.penalized { "penalized" } else { "step" };
            println!(
                "round {round:2} acc {accuracy:.3}: {hp} -> {} (dM {:+.3e}, dE {:+.3e}, {tag})",
                d.next, d.delta_m, d.delta_e
            );
        }
    }
    println!("final {}", tuner.current());
    Ok(())
}
