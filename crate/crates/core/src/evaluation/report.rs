use serde::{Deserialize, Serialize};

use super::answer::{evaluate_sets, QuestionRecord};
use super::metrics::{accuracy, comprehension, flip_rate, metric_change, MetricChange};
use crate::aqua::{Prompter, ProxySet};
use crate::engine::{Model, OverrideMap};
use crate::error::{Error, Result};
use crate::intervention::{Direction, InterventionPlan};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub direction: Direction,
    pub budget: usize,
    pub ratio: f64,
    pub n_good: usize,
    pub n_bad: usize,
    pub shortfall: bool,
}

impl From<&InterventionPlan> for PlanSummary {
    fn from(p: &InterventionPlan) -> Self {
        Self {
            direction: p.direction,
            budget: p.budget,
            ratio: p.ratio,
            n_good: p.selected_good.len(),
            n_bad: p.selected_bad.len(),
            shortfall: p.shortfall,
        }
    }
}

/// Accuracy and comprehension before and after one intervention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub plan: PlanSummary,
    /// Accuracy over proxies; `relative` is RAC.
    pub acc: MetricChange,
    /// Comprehension over parent questions; `relative` is RCC.
    pub com: MetricChange,
    /// Share of previously right proxies answered wrong afterwards.
    pub flip_rate: Option<f64>,
    /// Unmodified answers; empty inside a sweep, which stores them once.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub original_records: Vec<QuestionRecord>,
    pub records: Vec<QuestionRecord>,
}

impl EvalReport {
    pub fn fail(&self) -> bool {
        self.acc.fail || self.com.fail
    }
}

fn report_from(plan: &InterventionPlan, original: &[QuestionRecord], records: Vec<QuestionRecord>) -> EvalReport {
    let d = plan.direction;
    EvalReport {
        plan: plan.into(),
        acc: metric_change(accuracy(original), accuracy(&records), d),
        com: metric_change(comprehension(original), comprehension(&records), d),
        flip_rate: flip_rate(original, &records),
        original_records: Vec::new(),
        records,
    }
}

/// Evaluates one plan against the unmodified model.
pub fn evaluate_plan<T: Scalar>(model: &Model<T>, prompter: Prompter<'_>, sets: &[ProxySet], plan: &InterventionPlan) -> Result<EvalReport> {
    if sets.is_empty() {
        return Err(Error::InvalidArgument("no evaluation questions".into()));
    }
    let original = evaluate_sets(model, prompter, sets, &OverrideMap::new())?;
    let after = evaluate_sets(model, prompter, sets, &plan.override_map)?;
    let mut r = report_from(plan, &original, after);
    r.original_records = original;
    Ok(r)
}

/// All plans of one direction plus the selected best entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub direction: Direction,
    pub acc_original: f64,
    pub com_original: f64,
    /// Largest RAC among entries whose accuracy moved the intended way.
    pub best_by_rac: Option<usize>,
    /// Largest RCC among entries whose comprehension moved the intended way.
    pub best_by_rcc: Option<usize>,
    /// Largest RAC among entries with no failed metric.
    pub best_joint: Option<usize>,
    pub original_records: Vec<QuestionRecord>,
    pub entries: Vec<EvalReport>,
}

fn argmax_by(entries: &[EvalReport], score: impl Fn(&EvalReport) -> Option<f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in entries.iter().enumerate() {
        if let Some(v) = score(e) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

impl SweepReport {
    pub fn from_entries(direction: Direction, original_records: Vec<QuestionRecord>, entries: Vec<EvalReport>) -> Self {
        let best_by_rac = argmax_by(&entries, |e| (!e.acc.fail).then(|| e.acc.relative.value()).flatten());
        let best_by_rcc = argmax_by(&entries, |e| (!e.com.fail).then(|| e.com.relative.value()).flatten());
        let best_joint = argmax_by(&entries, |e| (!e.fail()).then(|| e.acc.relative.value()).flatten());
        Self {
            direction,
            acc_original: accuracy(&original_records),
            com_original: comprehension(&original_records),
            best_by_rac,
            best_by_rcc,
            best_joint,
            original_records,
            entries,
        }
    }

    /// Best joint entry restricted to ratios strictly between 0 and 1.
    pub fn best_joint_interior(&self) -> Option<usize> {
        argmax_by(&self.entries, |e| {
            let interior = e.plan.ratio > 0.0 && e.plan.ratio < 1.0;
            (interior && !e.fail()).then(|| e.acc.relative.value()).flatten()
        })
    }

    pub fn entry_at_ratio(&self, ratio: f64) -> Option<&EvalReport> {
        self.entries.iter().find(|e| (e.plan.ratio - ratio).abs() < 1e-9)
    }
}

/// Evaluates every plan (all of one direction) on the same questions.
pub fn sweep_report<T: Scalar>(model: &Model<T>, prompter: Prompter<'_>, sets: &[ProxySet], plans: &[InterventionPlan]) -> Result<SweepReport> {
    let direction = plans.first().ok_or_else(|| Error::InvalidArgument("no plans".into()))?.direction;
    if plans.iter().any(|p| p.direction != direction) {
        return Err(Error::InvalidArgument("a sweep mixes directions".into()));
    }
    if sets.is_empty() {
        return Err(Error::InvalidArgument("no evaluation questions".into()));
    }
    let original = evaluate_sets(model, prompter, sets, &OverrideMap::new())?;
    let mut entries = Vec::with_capacity(plans.len());
    for plan in plans {
        let after = evaluate_sets(model, prompter, sets, &plan.override_map)?;
        entries.push(report_from(plan, &original, after));
    }
    Ok(SweepReport::from_entries(direction, original, entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(ratio: f64, acc: (f64, f64), com: (f64, f64)) -> EvalReport {
        let d = Direction::Degrade;
        EvalReport {
            plan: PlanSummary {
                direction: d,
                budget: 10,
                ratio,
                n_good: 0,
                n_bad: 0,
                shortfall: false,
            },
            acc: metric_change(acc.0, acc.1, d),
            com: metric_change(com.0, com.1, d),
            flip_rate: None,
            original_records: vec![],
            records: vec![],
        }
    }

    #[test]
    fn best_entries_respect_fail_flags() {
        let entries = vec![
            entry(0.0, (0.5, 0.4), (0.5, 0.6)), // RAC 20, com fails
            entry(0.5, (0.5, 0.45), (0.5, 0.2)), // RAC 10, RCC 60
            entry(1.0, (0.5, 0.6), (0.5, 0.4)), // acc fails
        ];
        let s = SweepReport::from_entries(Direction::Degrade, vec![], entries);
        assert_eq!(s.best_by_rac, Some(0));
        assert_eq!(s.best_by_rcc, Some(1));
        assert_eq!(s.best_joint, Some(1));
        assert_eq!(s.best_joint_interior(), Some(1));
        assert!((s.entries[1].acc.relative.value().unwrap() - 10.0).abs() < 1e-9);
    }
}
