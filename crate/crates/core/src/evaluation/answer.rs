use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aqua::{Prompter, ProxySet, QAExample};
use crate::attribution::option_probs;
use crate::engine::{ops, Model, OverrideMap};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Model choice among the four letters of one prompt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub chosen: usize,
    /// 4-way softmax over the letter logits.
    pub probs: [f64; 4],
    /// Letter probabilities under the full-vocabulary softmax.
    pub vocab_probs: [f64; 4],
}

/// Index of the largest value; ties go to the lowest slot.
pub fn choose(values: &[f64; 4]) -> usize {
    let mut best = 0;
    for i in 1..4 {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

pub fn answer_from_logits<T: Scalar>(logits: &[T], letter_ids: [usize; 4]) -> Result<Answer> {
    if letter_ids.iter().any(|&i| i >= logits.len()) {
        return Err(Error::InvalidArgument("letter id outside the logit vector".into()));
    }
    let letter_logits = letter_ids.map(|i| logits[i].f64());
    let probs = option_probs(logits, &letter_ids).map(Scalar::f64);
    let lse = ops::log_sum_exp(logits).f64();
    let vocab_probs = letter_logits.map(|z| (z - lse).exp());
    Ok(Answer {
        chosen: choose(&letter_logits),
        probs,
        vocab_probs,
    })
}

pub fn answer<T: Scalar>(model: &Model<T>, tokens: &[usize], letter_ids: [usize; 4], overrides: &OverrideMap) -> Result<Answer> {
    answer_from_logits(&model.forward(tokens, overrides)?, letter_ids)
}

/// Outcome of one proxy question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub parent_id: String,
    pub correct: usize,
    pub chosen: usize,
    pub probs: [f64; 4],
    pub vocab_probs: [f64; 4],
}

impl QuestionRecord {
    pub fn is_right(&self) -> bool {
        self.chosen == self.correct
    }
}

fn record<T: Scalar>(model: &Model<T>, prompter: Prompter<'_>, q: &QAExample, parent: &str, overrides: &OverrideMap) -> Result<QuestionRecord> {
    let a = answer(model, &prompter.tokens(q)?, prompter.letter_ids(), overrides)?;
    Ok(QuestionRecord {
        id: q.id.clone(),
        parent_id: parent.to_string(),
        correct: q.correct_index,
        chosen: a.chosen,
        probs: a.probs,
        vocab_probs: a.vocab_probs,
    })
}

/// Answers every proxy of every set, in input order.
pub fn evaluate_sets<T: Scalar>(model: &Model<T>, prompter: Prompter<'_>, sets: &[ProxySet], overrides: &OverrideMap) -> Result<Vec<QuestionRecord>> {
    let jobs: Vec<(&QAExample, &str)> = sets
        .iter()
        .flat_map(|s| s.proxies.iter().map(move |p| (p, s.parent_id.as_str())))
        .collect();
    jobs.par_iter().map(|&(q, parent)| record(model, prompter, q, parent, overrides)).collect()
}

/// Answers plain questions (each is its own parent).
pub fn evaluate_questions<T: Scalar>(model: &Model<T>, prompter: Prompter<'_>, questions: &[QAExample], overrides: &OverrideMap) -> Result<Vec<QuestionRecord>> {
    questions.par_iter().map(|q| record(model, prompter, q, &q.id, overrides)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_lowest_slot() {
        assert_eq!(choose(&[0.0; 4]), 0);
        assert_eq!(choose(&[1.0, 2.0, 2.0, 0.0]), 1);
        assert_eq!(choose(&[1.0, 2.0, 2.0, 3.0]), 3);
    }

    #[test]
    fn symmetric_logits_give_uniform_probs() {
        let a = answer_from_logits(&[0.0f32; 9], [1, 2, 3, 4]).unwrap();
        assert_eq!(a.chosen, 0);
        assert!(a.probs.iter().all(|&p| (p - 0.25).abs() < 1e-7));
        assert!(a.vocab_probs.iter().all(|&p| (p - 1.0 / 9.0).abs() < 1e-7));
    }
}
