//! Small fixed-(M, E) sweep through the harness, printing the normalized
//! totals (each metric divided by its grid minimum).

use fedtune::harness::{cmd_sweep, read_rows, ExperimentConfig, SweepRow};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.repetitions = 2;
    cfg.sweep.m = vec![1, 5, 20];
    cfg.sweep.e = vec![1.0, 4.0];
    let dir = tempfile::tempdir()?;
    cmd_sweep(&cfg, dir.path(), true)?;
    let rows: Vec<SweepRow> = read_rows(&dir.path().join("sweep.csv"))?;
    println!("   M    E seed rounds   CompT  TransT   CompL  TransL");
    for r in rows {
        println!(
            "{:4} {:4} {:4} {:6} {:7.2} {:7.2} {:7.2} {:7.2}",
            r.m, r.e, r.seed, r.rounds, r.norm_comp_time, r.norm_trans_time, r.norm_comp_load, r.norm_trans_load
        );
    }
    Ok(())
}
