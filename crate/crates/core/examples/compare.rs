//! Baseline versus tuner over a few preference rows, printed like the
//! comparison report.

use fedtune::harness::{cmd_compare, read_rows, ExperimentConfig, ReportRow};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.repetitions = 2;
    cfg.compare.preferences = vec![[0.0, 0.0, 1.0, 0.0], [0.5, 0.5, 0.0, 0.0], [0.25; 4]];
    let dir = tempfile::tempdir()?;
    cmd_compare(&cfg, dir.path())?;
    let report: Vec<ReportRow> = read_rows(&dir.path().join("compare_report.csv"))?;
    for r in report {
        let prefs = match (r.pref_alpha, r.pref_beta, r.pref_gamma, r.pref_delta) {
            (Some(a), Some(b), Some(g), Some(d)) => format!("({a}, {b}, {g}, {d})"),
            _ => "-".into(),
        };
        let m = r.final_m_mean.map_or("-".into(), |m| format!("{m:.1}"));
        let e = r.final_e_mean.map_or("-".into(), |e| format!("{e:.1}"));
        let overall = r.overall_pct.map_or("-".into(), |p| format!("{p:+.2}%"));
        println!("{:10} {prefs:24} M {m:>5} E {e:>5} overall {overall}", r.arm);
    }
    Ok(())
}
