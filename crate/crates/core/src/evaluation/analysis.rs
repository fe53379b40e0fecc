use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::answer::evaluate_sets;
use super::metrics::{accuracy, comprehension, metric_change, MetricChange};
use crate::aqua::{Prompter, ProxySet};
use crate::attribution::NeuronSets;
use crate::engine::{Model, NeuronId, OverrideMap};
use crate::error::{Error, Result};
use crate::intervention::{build_plan, Direction};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommonNeurons {
    pub good: Vec<NeuronId>,
    pub bad: Vec<NeuronId>,
}

/// Neurons found in the good (resp. bad) sets of at least two tasks,
/// sorted by `(layer, index)`.
pub fn common_neurons(sets: &[(String, NeuronSets)]) -> CommonNeurons {
    let shared = |ids: &dyn Fn(&NeuronSets) -> Vec<NeuronId>| {
        let mut count: BTreeMap<NeuronId, usize> = BTreeMap::new();
        for (_, s) in sets {
            for n in ids(s).into_iter().collect::<BTreeSet<_>>() {
                *count.entry(n).or_default() += 1;
            }
        }
        count.into_iter().filter(|&(_, c)| c >= 2).map(|(n, _)| n).collect()
    };
    CommonNeurons {
        good: shared(&NeuronSets::good_ids),
        bad: shared(&NeuronSets::bad_ids),
    }
}

/// A task's sets with the common neurons removed, order preserved.
pub fn task_specific(sets: &NeuronSets, common: &CommonNeurons) -> NeuronSets {
    let mut out = sets.clone();
    out.good.retain(|s| !common.good.contains(&s.id()));
    out.bad.retain(|s| !common.bad.contains(&s.id()));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTaskCell {
    pub acc: MetricChange,
    pub com: MetricChange,
}

/// Effect of one task's task-specific neurons on every task's questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTaskMatrix {
    pub direction: Direction,
    pub budget: usize,
    pub ratio: f64,
    /// Row labels: the task whose questions are evaluated.
    pub eval_tasks: Vec<String>,
    /// Column labels: the task whose neurons are intervened on.
    pub source_tasks: Vec<String>,
    /// `cells[row][col]`; `None` when the source sets are empty.
    pub cells: Vec<Vec<Option<CrossTaskCell>>>,
}

/// Evaluates the plan built from each task's task-specific sets on the
/// questions of every task.
pub fn cross_task<T: Scalar>(
    model: &Model<T>,
    prompter: Prompter<'_>,
    sets: &[(String, NeuronSets)],
    eval_data: &[(String, Vec<ProxySet>)],
    direction: Direction,
    budget: usize,
    ratio: f64,
) -> Result<CrossTaskMatrix> {
    if sets.len() != eval_data.len() || sets.iter().zip(eval_data).any(|(a, b)| a.0 != b.0) {
        return Err(Error::InvalidArgument("neuron sets and evaluation data must list the same tasks".into()));
    }
    let common = common_neurons(sets);
    let baselines = eval_data
        .iter()
        .map(|(_, qs)| evaluate_sets(model, prompter, qs, &OverrideMap::new()))
        .collect::<Result<Vec<_>>>()?;
    let plans = sets
        .iter()
        .map(|(_, s)| {
            let specific = task_specific(s, &common);
            if specific.good.is_empty() && specific.bad.is_empty() {
                Ok(None)
            } else {
                build_plan(&specific, direction, budget, ratio).map(Some)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::with_capacity(eval_data.len());
    for ((_, qs), before) in eval_data.iter().zip(&baselines) {
        let mut row = Vec::with_capacity(plans.len());
        for plan in &plans {
            row.push(match plan {
                Some(p) => {
                    let after = evaluate_sets(model, prompter, qs, &p.override_map)?;
                    Some(CrossTaskCell {
                        acc: metric_change(accuracy(before), accuracy(&after), direction),
                        com: metric_change(comprehension(before), comprehension(&after), direction),
                    })
                }
                None => None,
            });
        }
        cells.push(row);
    }
    let names: Vec<String> = sets.iter().map(|(t, _)| t.clone()).collect();
    Ok(CrossTaskMatrix {
        direction,
        budget,
        ratio,
        eval_tasks: names.clone(),
        source_tasks: names,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerHistogram {
    pub good: Vec<usize>,
    pub bad: Vec<usize>,
}

/// Per-layer counts of the good and bad sets.
pub fn layer_histogram(sets: &NeuronSets, n_layers: usize) -> Result<LayerHistogram> {
    let mut good = vec![0; n_layers];
    let mut bad = vec![0; n_layers];
    for (list, counts) in [(&sets.good, &mut good), (&sets.bad, &mut bad)] {
        for s in list {
            *counts
                .get_mut(s.layer)
                .ok_or_else(|| Error::NeuronOutOfRange(s.id()))? += 1;
        }
    }
    Ok(LayerHistogram { good, bad })
}

/// Picks up to `n` parent ids, half comprehended and half not when both
/// kinds suffice, topping up from the other kind otherwise. Candidates are
/// taken in the given order.
pub fn balanced_selection(outcomes: &[(String, bool)], n: usize) -> Vec<String> {
    let yes: Vec<&String> = outcomes.iter().filter(|(_, c)| *c).map(|(id, _)| id).collect();
    let no: Vec<&String> = outcomes.iter().filter(|(_, c)| !*c).map(|(id, _)| id).collect();
    let mut n_yes = (n / 2).min(yes.len());
    let n_no = (n - n_yes).min(no.len());
    n_yes = (n - n_no).min(yes.len());
    let chosen: BTreeSet<&String> = yes[..n_yes].iter().chain(&no[..n_no]).copied().collect();
    outcomes.iter().filter(|(id, _)| chosen.contains(id)).map(|(id, _)| id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::ScoredNeuron;

    fn sets(good: &[(usize, usize)], bad: &[(usize, usize)]) -> NeuronSets {
        let mk = |v: &[(usize, usize)], sign: f64| {
            v.iter()
                .enumerate()
                .map(|(i, &(l, n))| ScoredNeuron::new(NeuronId::new(l, n), sign * (10 - i) as f64))
                .collect()
        };
        NeuronSets {
            good: mk(good, 1.0),
            bad: mk(bad, -1.0),
            ambiguous: vec![],
            z: 10,
            k: 10,
            warnings: vec![],
        }
    }

    #[test]
    fn disjoint_sets_share_nothing() {
        let c = common_neurons(&[("a".into(), sets(&[(0, 1)], &[(1, 1)])), ("b".into(), sets(&[(0, 2)], &[(1, 2)]))]);
        assert_eq!(c, CommonNeurons::default());
    }

    #[test]
    fn identical_sets_are_all_common() {
        let s = sets(&[(0, 1), (2, 3)], &[(1, 1)]);
        let c = common_neurons(&[("a".into(), s.clone()), ("b".into(), s.clone())]);
        assert_eq!(c.good, vec![NeuronId::new(0, 1), NeuronId::new(2, 3)]);
        assert_eq!(c.bad, vec![NeuronId::new(1, 1)]);
        let specific = task_specific(&s, &c);
        assert!(specific.good.is_empty() && specific.bad.is_empty());
    }

    #[test]
    fn histogram_sums_to_set_sizes() {
        let s = sets(&[(0, 1), (2, 3), (2, 4)], &[(1, 1)]);
        let h = layer_histogram(&s, 3).unwrap();
        assert_eq!(h.good, vec![1, 0, 2]);
        assert_eq!(h.bad, vec![0, 1, 0]);
        let empty = layer_histogram(&sets(&[], &[]), 2).unwrap();
        assert_eq!((empty.good, empty.bad), (vec![0, 0], vec![0, 0]));
        assert!(layer_histogram(&s, 2).is_err());
    }

    #[test]
    fn balanced_split_and_top_up() {
        let o: Vec<(String, bool)> = (0..10).map(|i| (format!("e{i}"), i % 3 == 0)).collect();
        // comprehended: e0 e3 e6 e9
        let pick = balanced_selection(&o, 6);
        assert_eq!(pick, vec!["e0", "e1", "e2", "e3", "e4", "e6"]);
        let pick = balanced_selection(&o, 10);
        assert_eq!(pick.len(), 10);
        let few = balanced_selection(&o[..2], 4);
        assert_eq!(few, vec!["e0", "e1"]);
    }
}
