//! Activation-level steering plans built from good and bad neuron sets.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attribution::NeuronSets;
use crate::engine::{NeuronId, OverrideMap, OverrideMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Double good neurons, zero bad ones.
    Enhance,
    /// Zero good neurons, double bad ones.
    Degrade,
}

impl Direction {
    pub fn good_mode(self) -> OverrideMode {
        match self {
            Direction::Enhance => OverrideMode::Double,
            Direction::Degrade => OverrideMode::Zero,
        }
    }

    pub fn bad_mode(self) -> OverrideMode {
        match self {
            Direction::Enhance => OverrideMode::Zero,
            Direction::Degrade => OverrideMode::Double,
        }
    }

    /// +1 when the intended effect is an increase.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Enhance => 1.0,
            Direction::Degrade => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionPlan {
    pub direction: Direction,
    pub budget: usize,
    pub ratio: f64,
    pub requested_good: usize,
    pub requested_bad: usize,
    pub selected_good: Vec<NeuronId>,
    pub selected_bad: Vec<NeuronId>,
    /// Fewer neurons than the budget were available.
    pub shortfall: bool,
    pub override_map: OverrideMap,
}

/// Selects `round(ratio * budget)` neurons from the head of the good list
/// and the remainder from the head of the bad list. When one list runs
/// short, the unused budget moves to the other list provided that list was
/// asked for at least one neuron.
pub fn build_plan(sets: &NeuronSets, direction: Direction, budget: usize, ratio: f64) -> Result<InterventionPlan> {
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!("ratio {ratio} outside [0, 1]")));
    }
    if sets.good.is_empty() && sets.bad.is_empty() {
        return Err(Error::InvalidArgument("both neuron sets are empty".into()));
    }
    let requested_good = ((ratio * budget as f64).round() as usize).min(budget);
    let requested_bad = budget - requested_good;
    let mut n_good = requested_good.min(sets.good.len());
    let mut n_bad = requested_bad.min(sets.bad.len());
    let spare = budget - n_good - n_bad;
    if spare > 0 && requested_bad > 0 {
        n_bad = (n_bad + spare).min(sets.bad.len());
    }
    let spare = budget - n_good - n_bad;
    if spare > 0 && requested_good > 0 {
        n_good = (n_good + spare).min(sets.good.len());
    }
    let selected_good: Vec<NeuronId> = sets.good[..n_good].iter().map(|s| s.id()).collect();
    let selected_bad: Vec<NeuronId> = sets.bad[..n_bad].iter().map(|s| s.id()).collect();
    let mut override_map = OverrideMap::new();
    for &n in &selected_good {
        override_map.insert(n, direction.good_mode())?;
    }
    for &n in &selected_bad {
        override_map.insert(n, direction.bad_mode())?;
    }
    Ok(InterventionPlan {
        direction,
        budget,
        ratio,
        requested_good,
        requested_bad,
        shortfall: n_good + n_bad < budget,
        selected_good,
        selected_bad,
        override_map,
    })
}

/// Plans at ratios `0.0, 0.1, ..., 1.0`.
pub fn ratio_sweep(sets: &NeuronSets, direction: Direction, budget: usize) -> Result<Vec<InterventionPlan>> {
    ratio_sweep_with_step(sets, direction, budget, 0.1)
}

pub fn ratio_sweep_with_step(sets: &NeuronSets, direction: Direction, budget: usize, step: f64) -> Result<Vec<InterventionPlan>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidArgument(format!("sweep step {step} outside (0, 1]")));
    }
    let n = (1.0 / step).round() as usize;
    if ((n as f64) * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("sweep step {step} does not divide 1")));
    }
    (0..=n).map(|i| build_plan(sets, direction, budget, i as f64 / n as f64)).collect()
}

pub const PLAN_SCHEMA: u32 = 1;

/// Persisted plans derived from one neuron-set file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub schema_version: u32,
    pub task: String,
    pub model_hash: String,
    pub neuron_set_hash: String,
    pub plans: Vec<InterventionPlan>,
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

impl PlanFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plans serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(text)?;
        if f.schema_version != PLAN_SCHEMA {
            return Err(Error::Schema(format!("plan schema version {}", f.schema_version)));
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::ScoredNeuron;

    fn sets(n_good: usize, n_bad: usize) -> NeuronSets {
        NeuronSets {
            good: (0..n_good).map(|i| ScoredNeuron::new(NeuronId::new(0, i), (n_good - i) as f64)).collect(),
            bad: (0..n_bad).map(|i| ScoredNeuron::new(NeuronId::new(1, i), -((n_bad - i) as f64))).collect(),
            ambiguous: vec![],
            z: 500,
            k: 500,
            warnings: vec![],
        }
    }

    #[test]
    fn rounding_split() {
        let p = build_plan(&sets(200, 200), Direction::Enhance, 100, 0.37).unwrap();
        assert_eq!((p.selected_good.len(), p.selected_bad.len()), (37, 63));
        assert!(!p.shortfall);
        let p = build_plan(&sets(200, 200), Direction::Enhance, 100, 1.0).unwrap();
        assert_eq!((p.selected_good.len(), p.selected_bad.len()), (100, 0));
    }

    #[test]
    fn short_good_list_moves_budget_to_bad() {
        let p = build_plan(&sets(30, 200), Direction::Degrade, 100, 0.5).unwrap();
        assert_eq!((p.selected_good.len(), p.selected_bad.len()), (30, 70));
        assert_eq!((p.requested_good, p.requested_bad), (50, 50));
        assert_eq!(p.selected_good[0], NeuronId::new(0, 0));
        assert_eq!(p.override_map.len(), 100);
    }

    #[test]
    fn unrequested_list_is_never_used() {
        let p = build_plan(&sets(30, 200), Direction::Enhance, 100, 1.0).unwrap();
        assert_eq!((p.selected_good.len(), p.selected_bad.len()), (30, 0));
        assert!(p.shortfall);
        let p = build_plan(&sets(30, 0), Direction::Degrade, 100, 0.0);
        assert!(p.unwrap().override_map.is_empty());
    }

    #[test]
    fn modes_follow_direction() {
        for d in [Direction::Enhance, Direction::Degrade] {
            let p = build_plan(&sets(10, 10), d, 10, 0.5).unwrap();
            for n in &p.selected_good {
                assert_eq!(p.override_map.get(*n), Some(d.good_mode()));
            }
            for n in &p.selected_bad {
                assert_eq!(p.override_map.get(*n), Some(d.bad_mode()));
            }
        }
        assert_eq!(Direction::Enhance.good_mode(), OverrideMode::Double);
        assert_eq!(Direction::Degrade.good_mode(), OverrideMode::Zero);
    }

    #[test]
    fn sweep_has_eleven_closed_plans() {
        let s = sets(60, 60);
        let plans = ratio_sweep(&s, Direction::Degrade, 100).unwrap();
        assert_eq!(plans.len(), 11);
        assert!(plans[0].selected_good.is_empty());
        let all: Vec<NeuronId> = s.good_ids().into_iter().chain(s.bad_ids()).collect();
        for p in &plans {
            assert!(p.override_map.iter().all(|(n, _)| all.contains(&n)));
        }
        assert!((plans[3].ratio - 0.3).abs() < 1e-12);
    }

    #[test]
    fn invalid_arguments() {
        assert!(build_plan(&sets(0, 0), Direction::Enhance, 10, 0.5).is_err());
        assert!(build_plan(&sets(1, 1), Direction::Enhance, 0, 0.5).is_err());
        assert!(build_plan(&sets(1, 1), Direction::Enhance, 10, 1.5).is_err());
        assert!(ratio_sweep_with_step(&sets(1, 1), Direction::Enhance, 10, 0.3).is_err());
    }
}
