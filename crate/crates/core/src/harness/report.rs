//! Baseline-versus-tuner comparison table.

use serde::{Deserialize, Serialize};

use super::{HarnessError, SummaryRow};
use crate::types::{compare, OverheadVector, Preferences};

/// One line of `compare_report.csv`. `arm` is `baseline`, `fedtune` (one per
/// preference row) or `grand_mean`, which carries only the mean of the
/// per-preference overall scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub arm: String,
    pub pref_alpha: Option<f64>,
    pub pref_beta: Option<f64>,
    pub pref_gamma: Option<f64>,
    pub pref_delta: Option<f64>,
    pub runs: usize,
    pub comp_time_mean: Option<f64>,
    pub comp_time_std: Option<f64>,
    pub trans_time_mean: Option<f64>,
    pub trans_time_std: Option<f64>,
    pub comp_load_mean: Option<f64>,
    pub comp_load_std: Option<f64>,
    pub trans_load_mean: Option<f64>,
    pub trans_load_std: Option<f64>,
    pub final_m_mean: Option<f64>,
    pub final_m_std: Option<f64>,
    pub final_e_mean: Option<f64>,
    pub final_e_std: Option<f64>,
    /// Signed percentage; positive is an improvement over the baseline.
    pub overall_pct: Option<f64>,
}

impl ReportRow {
    pub fn mean_totals(&self) -> Option<OverheadVector> {
        Some(OverheadVector::new(self.comp_time_mean?, self.trans_time_mean?, self.comp_load_mean?, self.trans_load_mean?))
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(arm: &str, prefs: Option<[f64; 4]>, runs: &[&SummaryRow]) -> ReportRow {
    let stat = |f: fn(&SummaryRow) -> f64| {
        let v: Vec<f64> = runs.iter().map(|r| f(r)).collect();
        mean_std(&v)
    };
    let (ct, tt, cl, tl) = (stat(|r| r.comp_time), stat(|r| r.trans_time), stat(|r| r.comp_load), stat(|r| r.trans_load));
    let (fm, fe) = (stat(|r| r.final_m as f64), stat(|r| r.final_e));
    ReportRow {
        arm: arm.to_string(),
        pref_alpha: prefs.map(|p| p[0]),
        pref_beta: prefs.map(|p| p[1]),
        pref_gamma: prefs.map(|p| p[2]),
        pref_delta: prefs.map(|p| p[3]),
        runs: runs.len(),
        comp_time_mean: Some(ct.0),
        comp_time_std: Some(ct.1),
        trans_time_mean: Some(tt.0),
        trans_time_std: Some(tt.1),
        comp_load_mean: Some(cl.0),
        comp_load_std: Some(cl.1),
        trans_load_mean: Some(tl.0),
        trans_load_std: Some(tl.1),
        final_m_mean: Some(fm.0),
        final_m_std: Some(fm.1),
        final_e_mean: Some(fe.0),
        final_e_std: Some(fe.1),
        overall_pct: None,
    }
}

/// Builds the report from per-run rows: baseline rows have no preferences,
/// tuned rows carry the preference they ran with. The overall score of a
/// row is `-compare(baseline mean, tuned mean) * 100`; the grand mean is the
/// simple mean of those scores.
pub fn build_report(rows: &[SummaryRow], grid: &[Preferences]) -> Result<Vec<ReportRow>, HarnessError> {
    let baseline: Vec<&SummaryRow> = rows.iter().filter(|r| r.prefs().is_none()).collect();
    if baseline.is_empty() {
        return Err(HarnessError::Config("comparison needs at least one baseline run".into()));
    }
    let base = summarize("baseline", None, &baseline);
    let base_mean = base.mean_totals().expect("baseline means present");
    let mut out = vec![base];
    let mut scores = Vec::with_capacity(grid.len());
    for p in grid {
        let w = p.as_array();
        let tuned: Vec<&SummaryRow> = rows.iter().filter(|r| r.prefs() == Some(w)).collect();
        if tuned.is_empty() {
            return Err(HarnessError::Config(format!("no tuned runs for preferences {w:?}")));
        }
        let mut row = summarize("fedtune", Some(w), &tuned);
        let score = -compare(&base_mean, &row.mean_totals().expect("means present"), p)
            .map_err(|e| HarnessError::Config(format!("baseline overhead: {e}")))?
            * 100.0;
        row.overall_pct = Some(score);
        scores.push(score);
        out.push(row);
    }
    out.push(ReportRow {
        arm: "grand_mean".into(),
        pref_alpha: None,
        pref_beta: None,
        pref_gamma: None,
        pref_delta: None,
        runs: rows.len() - baseline.len(),
        comp_time_mean: None,
        comp_time_std: None,
        trans_time_mean: None,
        trans_time_std: None,
        comp_load_mean: None,
        comp_load_std: None,
        trans_load_mean: None,
        trans_load_std: None,
        final_m_mean: None,
        final_m_std: None,
        final_e_mean: None,
        final_e_std: None,
        overall_pct: Some(scores.iter().sum::<f64>() / scores.len().max(1) as f64),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::RunStatus;

    fn row(prefs: Option<[f64; 4]>, seed: u64, totals: [f64; 4], m: usize, e: f64) -> SummaryRow {
        SummaryRow {
            pref_alpha: prefs.map(|p| p[0]),
            pref_beta: prefs.map(|p| p[1]),
            pref_gamma: prefs.map(|p| p[2]),
            pref_delta: prefs.map(|p| p[3]),
            seed,
            comp_time: totals[0],
            trans_time: totals[1],
            comp_load: totals[2],
            trans_load: totals[3],
            final_m: m,
            final_e: e,
            rounds: 10,
            status: RunStatus::ReachedTarget,
        }
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identical_arms_score_zero() {
        let p = Preferences::equal();
        let rows = vec![
            row(None, 0, [10.0, 20.0, 30.0, 40.0], 20, 20.0),
            row(Some(p.as_array()), 0, [10.0, 20.0, 30.0, 40.0], 20, 20.0),
        ];
        let rep = build_report(&rows, &[p]).unwrap();
        assert_eq!(rep.len(), 3);
        assert_eq!(rep[1].overall_pct, Some(0.0));
        assert_eq!(rep[2].arm, "grand_mean");
        assert_eq!(rep[2].overall_pct, Some(0.0));
    }

    #[test]
    fn improvement_is_positive() {
        let p = Preferences::new(0.0, 0.0, 1.0, 0.0).unwrap();
        let rows = vec![
            row(None, 0, [1.0, 1.0, 100.0, 1.0], 20, 20.0),
            row(None, 1, [1.0, 1.0, 300.0, 1.0], 20, 20.0),
            row(Some(p.as_array()), 0, [5.0, 5.0, 100.0, 5.0], 1, 1.0),
            row(Some(p.as_array()), 1, [5.0, 5.0, 140.0, 5.0], 1, 1.0),
        ];
        let rep = build_report(&rows, &[p]).unwrap();
        // baseline mean CompL 200, tuned mean 120
        assert!((rep[1].overall_pct.unwrap() - 40.0).abs() < 1e-12);
        assert_eq!(rep[1].final_m_mean, Some(1.0));
        assert_eq!(rep[0].comp_load_mean, Some(200.0));
    }

    #[test]
    fn missing_arms_rejected() {
        let p = Preferences::equal();
        assert!(build_report(&[row(Some(p.as_array()), 0, [1.0; 4], 1, 1.0)], &[p]).is_err());
        assert!(build_report(&[row(None, 0, [1.0; 4], 1, 1.0)], &[p]).is_err());
    }
}
