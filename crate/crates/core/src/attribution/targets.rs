use serde::{Deserialize, Serialize};

use crate::engine::{ops, LogitObjective};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// 4-way softmax probability of the correct letter.
    ContrastiveCe,
    /// Full-vocabulary log-probability of the correct letter.
    CorrectLogProb,
    /// Full-vocabulary P(correct) minus the mean P of the wrong letters.
    TnMargin,
    /// Marker for activation-magnitude scoring; not differentiable.
    ActivationOnly,
    /// Marker for random selection; not differentiable.
    Random,
}

impl TargetKind {
    pub fn is_differentiable(self) -> bool {
        matches!(self, TargetKind::ContrastiveCe | TargetKind::CorrectLogProb | TargetKind::TnMargin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetFn {
    pub kind: TargetKind,
    pub option_token_ids: [usize; 4],
    pub correct_slot: usize,
}

impl TargetFn {
    pub fn new(kind: TargetKind, option_token_ids: [usize; 4], correct_slot: usize) -> Result<Self> {
        if correct_slot > 3 {
            return Err(Error::InvalidArgument(format!("correct slot {correct_slot} out of range")));
        }
        for i in 0..4 {
            if option_token_ids[..i].contains(&option_token_ids[i]) {
                return Err(Error::InvalidArgument("option token ids must be distinct".into()));
            }
        }
        Ok(Self {
            kind,
            option_token_ids,
            correct_slot,
        })
    }

    fn correct_id(&self) -> usize {
        self.option_token_ids[self.correct_slot]
    }

    fn check<T: Scalar>(&self, logits: &[T]) -> Result<()> {
        if self.option_token_ids.iter().any(|&i| i >= logits.len()) {
            return Err(Error::InvalidArgument("option token id outside the logit vector".into()));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                site: "logits",
                layer: None,
                position: None,
            });
        }
        Ok(())
    }
}

/// 4-way softmax over the option letters.
pub fn option_probs<T: Scalar>(logits: &[T], ids: &[usize; 4]) -> [T; 4] {
    let z = ids.map(|i| logits[i]);
    let p = ops::softmax(&z);
    [p[0], p[1], p[2], p[3]]
}

/// Cross-entropy of the correct option under the 4-way softmax.
pub fn option_cross_entropy(logits: &[f64], ids: &[usize; 4], correct_slot: usize) -> f64 {
    let z = ids.map(|i| logits[i]);
    ops::log_sum_exp(&z) - z[correct_slot]
}

/// Sum of next-token log-probabilities of an answer sequence, given the
/// logits that predicted each answer token.
pub fn summed_log_prob(step_logits: &[Vec<f64>], answer: &[usize]) -> Result<f64> {
    if step_logits.len() != answer.len() {
        return Err(Error::InvalidArgument("one logit vector per answer token".into()));
    }
    Ok(step_logits.iter().zip(answer).map(|(z, &y)| z[y] - ops::log_sum_exp(z)).sum())
}

impl<T: Scalar> LogitObjective<T> for TargetFn {
    fn value_and_grad(&self, logits: &[T]) -> Result<(T, Vec<T>)> {
        self.check(logits)?;
        let mut grad = vec![T::zero(); logits.len()];
        let value = match self.kind {
            TargetKind::ContrastiveCe => {
                let p = option_probs(logits, &self.option_token_ids);
                let pc = p[self.correct_slot];
                for (k, &id) in self.option_token_ids.iter().enumerate() {
                    let delta = if k == self.correct_slot { T::one() } else { T::zero() };
                    grad[id] = pc * (delta - p[k]);
                }
                pc
            }
            TargetKind::CorrectLogProb => {
                let p = ops::softmax(logits);
                for (g, &q) in grad.iter_mut().zip(&p) {
                    *g = -q;
                }
                grad[self.correct_id()] += T::one();
                logits[self.correct_id()] - ops::log_sum_exp(logits)
            }
            TargetKind::TnMargin => {
                let p = ops::softmax(logits);
                let third = T::one() / T::of(3.0);
                let mut coef = [-third; 4];
                coef[self.correct_slot] = T::one();
                let f = self.option_token_ids.iter().zip(&coef).map(|(&i, &a)| a * p[i]).sum::<T>();
                for (g, &q) in grad.iter_mut().zip(&p) {
                    *g = -q * f;
                }
                for (&i, &a) in self.option_token_ids.iter().zip(&coef) {
                    grad[i] += a * p[i];
                }
                f
            }
            TargetKind::ActivationOnly | TargetKind::Random => {
                return Err(Error::InvalidArgument(format!("{:?} has no differentiable target", self.kind)));
            }
        };
        Ok((value, grad))
    }
}

/// Scalar target value of final-position logits.
pub fn target_value<T: Scalar>(logits: &[T], target: &TargetFn) -> Result<T> {
    LogitObjective::<T>::value(target, logits)
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDS: [usize; 4] = [1, 2, 3, 4];

    #[test]
    fn equal_option_logits_give_quarter() {
        let t = TargetFn::new(TargetKind::ContrastiveCe, IDS, 2).unwrap();
        let v: f64 = target_value(&[5.0, 0.7, 0.7, 0.7, 0.7, -3.0], &t).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn dominant_logit_value() {
        let t = TargetFn::new(TargetKind::ContrastiveCe, [0, 1, 2, 3], 0).unwrap();
        let v: f64 = target_value(&[10.0, 0.0, 0.0, 0.0], &t).unwrap();
        let e10 = 10f64.exp();
        assert!((v - e10 / (e10 + 3.0)).abs() < 1e-15);
        assert!((v - 0.99986).abs() < 5e-6);
    }

    #[test]
    fn stable_for_huge_logits() {
        let t = TargetFn::new(TargetKind::ContrastiveCe, IDS, 0).unwrap();
        let v: f64 = target_value(&[0.0, 1000.0, 999.0, 0.0, 0.0], &t).unwrap();
        assert!(v.is_finite() && v > 0.7);
    }

    #[test]
    fn gradients_match_differences() {
        let logits = [0.3, -1.1, 2.0, 0.5, 0.9, -0.4, 1.7];
        for kind in [TargetKind::ContrastiveCe, TargetKind::CorrectLogProb, TargetKind::TnMargin] {
            let t = TargetFn::new(kind, [2, 5, 0, 6], 1).unwrap();
            let (_, g) = LogitObjective::<f64>::value_and_grad(&t, &logits).unwrap();
            for j in 0..logits.len() {
                let mut a = logits;
                let mut b = logits;
                a[j] += 1e-6;
                b[j] -= 1e-6;
                let fd = (target_value(&a, &t).unwrap() - target_value(&b, &t).unwrap()) / 2e-6;
                assert!((fd - g[j]).abs() < 1e-8, "{kind:?} {j}");
            }
        }
    }

    #[test]
    fn tn_margin_uses_full_vocabulary() {
        let t = TargetFn::new(TargetKind::TnMargin, [0, 1, 2, 3], 0).unwrap();
        let z = [1.0, 0.0, 0.0, 0.0, 2.0];
        let p = ops::softmax(&z);
        let want = p[0] - (p[1] + p[2] + p[3]) / 3.0;
        assert!((target_value::<f64>(&z, &t).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid_targets() {
        assert!(TargetFn::new(TargetKind::ContrastiveCe, [1, 1, 2, 3], 0).is_err());
        assert!(TargetFn::new(TargetKind::ContrastiveCe, IDS, 4).is_err());
        let t = TargetFn::new(TargetKind::Random, IDS, 0).unwrap();
        assert!(target_value(&[0.0; 5], &t).is_err());
        let c = TargetFn::new(TargetKind::ContrastiveCe, IDS, 0).unwrap();
        assert!(target_value(&[0.0, f64::NAN, 0.0, 0.0, 0.0], &c).is_err());
    }

    #[test]
    fn summed_log_prob_adds_steps() {
        let steps = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let v = summed_log_prob(&steps, &[0, 0]).unwrap();
        let want = 0.5f64.ln() + (1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert!((v - want).abs() < 1e-15);
    }
}
