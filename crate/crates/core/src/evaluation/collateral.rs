use serde::{Deserialize, Serialize};

use super::answer::evaluate_sets;
use crate::aqua::{Prompter, ProxySet};
use crate::engine::{Model, OverrideMap};
use crate::error::{Error, Result};
use crate::intervention::{Direction, InterventionPlan};
use crate::scalar::Scalar;

/// Letter probabilities of one question before and after an intervention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollateralQuestion {
    pub id: String,
    pub correct: usize,
    pub before: [f64; 4],
    pub after: [f64; 4],
    /// `(after - before) / before * 100` per option.
    pub relative: [f64; 4],
}

impl CollateralQuestion {
    pub fn new(id: impl Into<String>, correct: usize, before: [f64; 4], after: [f64; 4]) -> Self {
        let mut relative = [0.0; 4];
        for i in 0..4 {
            if before[i] > 0.0 {
                relative[i] = (after[i] - before[i]) / before[i] * 100.0;
            }
        }
        Self {
            id: id.into(),
            correct,
            before,
            after,
            relative,
        }
    }
}

/// Counts of wrong options moving along with the correct one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollateralReport {
    pub direction: Direction,
    pub n_questions: usize,
    /// Questions whose correct-option probability moved the intended way.
    pub z: usize,
    /// Of those, questions with at least one wrong option moving the same way.
    pub y: usize,
    /// Of those, questions with all three wrong options moving the same way.
    pub x: usize,
    /// Mean relative change (percent) of the correct option.
    pub mean_correct_change: f64,
    /// Mean over questions of the mean relative change of the wrong options.
    pub mean_wrong_change: f64,
    pub questions: Vec<CollateralQuestion>,
}

pub fn collateral_counts(direction: Direction, questions: Vec<CollateralQuestion>) -> CollateralReport {
    let s = direction.sign();
    let (mut x, mut y, mut z) = (0, 0, 0);
    let mut correct_sum = 0.0;
    let mut wrong_sum = 0.0;
    for q in &questions {
        let moved = |i: usize| (q.after[i] - q.before[i]) * s > 0.0;
        let wrong: Vec<usize> = (0..4).filter(|&i| i != q.correct).collect();
        if moved(q.correct) {
            z += 1;
            let n = wrong.iter().filter(|&&i| moved(i)).count();
            y += (n >= 1) as usize;
            x += (n == 3) as usize;
        }
        correct_sum += q.relative[q.correct];
        wrong_sum += wrong.iter().map(|&i| q.relative[i]).sum::<f64>() / 3.0;
    }
    let n = questions.len().max(1) as f64;
    CollateralReport {
        direction,
        n_questions: questions.len(),
        z,
        y,
        x,
        mean_correct_change: correct_sum / n,
        mean_wrong_change: wrong_sum / n,
        questions,
    }
}

/// Full-vocabulary letter probabilities before and after `plan`.
pub fn collateral_report<T: Scalar>(model: &Model<T>, prompter: Prompter<'_>, plan: &InterventionPlan, sets: &[ProxySet]) -> Result<CollateralReport> {
    if sets.is_empty() {
        return Err(Error::InvalidArgument("no evaluation questions".into()));
    }
    let before = evaluate_sets(model, prompter, sets, &OverrideMap::new())?;
    let after = evaluate_sets(model, prompter, sets, &plan.override_map)?;
    let questions = before
        .iter()
        .zip(&after)
        .map(|(b, a)| CollateralQuestion::new(b.id.clone(), b.correct, b.vocab_probs, a.vocab_probs))
        .collect();
    Ok(collateral_counts(plan.direction, questions))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_built_fixture() {
        let qs = vec![
            // correct up, all wrong up: z, y, x
            CollateralQuestion::new("q1", 0, [0.4, 0.1, 0.1, 0.1], [0.5, 0.2, 0.2, 0.2]),
            // correct up, one wrong up: z, y
            CollateralQuestion::new("q2", 1, [0.1, 0.4, 0.1, 0.1], [0.05, 0.6, 0.2, 0.05]),
            // correct down: none
            CollateralQuestion::new("q3", 2, [0.1, 0.1, 0.4, 0.1], [0.2, 0.2, 0.2, 0.2]),
        ];
        let r = collateral_counts(Direction::Enhance, qs.clone());
        assert_eq!((r.x, r.y, r.z), (1, 2, 2));
        let mean_correct = (25.0 + 50.0 - 50.0) / 3.0;
        assert!((r.mean_correct_change - mean_correct).abs() < 1e-9);
        let mean_wrong = (100.0 + (-50.0 + 100.0 - 50.0) / 3.0 + 100.0) / 3.0;
        assert!((r.mean_wrong_change - mean_wrong).abs() < 1e-9);

        let d = collateral_counts(Direction::Degrade, qs);
        // only q3's correct option fell; none of its wrong options fell
        assert_eq!((d.x, d.y, d.z), (0, 0, 1));
    }

    #[test]
    fn no_op_gives_zeros() {
        let p = [0.1, 0.2, 0.3, 0.1];
        let r = collateral_counts(Direction::Enhance, vec![CollateralQuestion::new("q", 0, p, p)]);
        assert_eq!((r.x, r.y, r.z), (0, 0, 0));
        assert_eq!(r.mean_correct_change, 0.0);
        assert_eq!(r.mean_wrong_change, 0.0);
    }
}
