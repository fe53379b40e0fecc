use std::path::Path;

use serde::Serialize;

use super::analysis::{CrossTaskMatrix, LayerHistogram};
use super::metrics::Relative;
use super::report::SweepReport;
use crate::error::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// One row of the RAC/RCC summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub task: String,
    pub scorer: String,
    pub enhance_rac: String,
    pub enhance_rcc: String,
    pub degrade_rac: String,
    pub degrade_rcc: String,
}

fn cell(sweep: Option<&SweepReport>, use_rcc: bool) -> String {
    let Some(s) = sweep else {
        return "-".into();
    };
    let best = s.best_joint.map(|i| &s.entries[i]);
    match best {
        Some(e) => {
            let m = if use_rcc { &e.com } else { &e.acc };
            m.relative.to_string()
        }
        None => "Fail".into(),
    }
}

impl SummaryRow {
    /// Uses each sweep's best joint entry; "Fail" when every entry failed.
    pub fn from_sweeps(task: &str, scorer: &str, enhance: Option<&SweepReport>, degrade: Option<&SweepReport>) -> Self {
        Self {
            task: task.into(),
            scorer: scorer.into(),
            enhance_rac: cell(enhance, false),
            enhance_rcc: cell(enhance, true),
            degrade_rac: cell(degrade, false),
            degrade_rcc: cell(degrade, true),
        }
    }
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `ratio,n_good,n_bad,acc,com,rac,rcc,fail_acc,fail_com` per entry.
pub fn write_sweep_csv(path: &Path, sweep: &SweepReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["ratio", "n_good", "n_bad", "acc", "com", "rac", "rcc", "fail_acc", "fail_com"]).map_err(csv_err)?;
    for e in &sweep.entries {
        w.write_record([
            format!("{:.1}", e.plan.ratio),
            e.plan.n_good.to_string(),
            e.plan.n_bad.to_string(),
            format!("{:.4}", e.acc.intervened),
            format!("{:.4}", e.com.intervened),
            e.acc.relative.to_string(),
            e.com.relative.to_string(),
            e.acc.fail.to_string(),
            e.com.fail.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `layer,good,bad` per layer.
pub fn write_histogram_csv(path: &Path, h: &LayerHistogram) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["layer", "good", "bad"]).map_err(csv_err)?;
    for (l, (g, b)) in h.good.iter().zip(&h.bad).enumerate() {
        w.write_record([l.to_string(), g.to_string(), b.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: `eval_task,source_task,rac,rcc` with signed percentages.
pub fn write_matrix_csv(path: &Path, m: &CrossTaskMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["eval_task", "source_task", "rac", "rcc"]).map_err(csv_err)?;
    let show = |r: Relative| r.to_string();
    for (row, eval) in m.cells.iter().zip(&m.eval_tasks) {
        for (c, src) in row.iter().zip(&m.source_tasks) {
            let (rac, rcc) = match c {
                Some(c) => (show(c.acc.signed), show(c.com.signed)),
                None => ("-".into(), "-".into()),
            };
            w.write_record([eval.as_str(), src.as_str(), &rac, &rcc]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        write_histogram_csv(&p, &LayerHistogram { good: vec![1, 2], bad: vec![0, 3] }).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "layer,good,bad\n0,1,0\n1,2,3\n");
    }
}
