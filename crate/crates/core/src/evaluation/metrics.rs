use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::answer::QuestionRecord;
use crate::intervention::Direction;

/// Fraction of questions answered correctly.
pub fn accuracy(records: &[QuestionRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.is_right()).count() as f64 / records.len() as f64
}

/// Per parent question: number of proxies answered correctly and total.
pub fn proxy_tally(records: &[QuestionRecord]) -> BTreeMap<&str, (usize, usize)> {
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = tally.entry(r.parent_id.as_str()).or_default();
        e.0 += r.is_right() as usize;
        e.1 += 1;
    }
    tally
}

/// A parent question is comprehended when at least two of its three
/// proxies are answered correctly.
pub fn comprehends(right: usize) -> bool {
    right >= 2
}

/// Fraction of parent questions comprehended.
pub fn comprehension(records: &[QuestionRecord]) -> f64 {
    let tally = proxy_tally(records);
    if tally.is_empty() {
        return 0.0;
    }
    tally.values().filter(|(r, _)| comprehends(*r)).count() as f64 / tally.len() as f64
}

/// Relative change in percent, or undefined when the original is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Relative {
    Value(f64),
    Undefined(UndefinedTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UndefinedTag {
    Undefined,
}

impl Relative {
    pub const UNDEFINED: Relative = Relative::Undefined(UndefinedTag::Undefined);

    pub fn value(self) -> Option<f64> {
        match self {
            Relative::Value(v) => Some(v),
            Relative::Undefined(_) => None,
        }
    }
}

impl std::fmt::Display for Relative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Relative::Value(v) => write!(f, "{v:.1}"),
            Relative::Undefined(_) => f.write_str("undefined"),
        }
    }
}

/// Change of one metric under an intervention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricChange {
    pub original: f64,
    pub intervened: f64,
    /// `(intervened - original) / original * 100`.
    pub signed: Relative,
    /// `|intervened - original| / original * 100`.
    pub relative: Relative,
    /// The change has the sign opposite to the intended one.
    pub fail: bool,
}

pub fn metric_change(original: f64, intervened: f64, direction: Direction) -> MetricChange {
    let delta = intervened - original;
    let (signed, relative) = if original > 0.0 {
        let s = delta / original * 100.0;
        (Relative::Value(s), Relative::Value(s.abs()))
    } else {
        (Relative::UNDEFINED, Relative::UNDEFINED)
    };
    MetricChange {
        original,
        intervened,
        signed,
        relative,
        fail: delta * direction.sign() < 0.0,
    }
}

/// RAC and RCC with their fail flags.
pub fn rac_rcc(acc: (f64, f64), com: (f64, f64), direction: Direction) -> (MetricChange, MetricChange) {
    (metric_change(acc.0, acc.1, direction), metric_change(com.0, com.1, direction))
}

/// Fraction of questions right before the intervention that are wrong
/// after it (`None` when none were right).
pub fn flip_rate(before: &[QuestionRecord], after: &[QuestionRecord]) -> Option<f64> {
    let mut right = 0;
    let mut flipped = 0;
    for (b, a) in before.iter().zip(after) {
        debug_assert_eq!(b.id, a.id);
        if b.is_right() {
            right += 1;
            flipped += (!a.is_right()) as usize;
        }
    }
    (right > 0).then(|| flipped as f64 / right as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rec(parent: &str, t: usize, right: bool) -> QuestionRecord {
        QuestionRecord {
            id: format!("{parent}#{t}"),
            parent_id: parent.into(),
            correct: 1,
            chosen: if right { 1 } else { 2 },
            probs: [0.25; 4],
            vocab_probs: [0.1; 4],
        }
    }

    #[test]
    fn two_of_three_rule() {
        let rrw = vec![rec("a", 1, true), rec("a", 2, true), rec("a", 3, false)];
        let rww = vec![rec("b", 1, true), rec("b", 2, false), rec("b", 3, false)];
        assert_eq!(comprehension(&rrw), 1.0);
        assert_eq!(comprehension(&rww), 0.0);
        let both: Vec<_> = rrw.into_iter().chain(rww).collect();
        assert_eq!(comprehension(&both), 0.5);
        assert_eq!(accuracy(&both), 0.5);
    }

    #[test]
    fn rac_arithmetic() {
        let c = metric_change(0.60, 0.30, Direction::Degrade);
        assert!((c.relative.value().unwrap() - 50.0).abs() < 1e-9);
        assert!((c.signed.value().unwrap() + 50.0).abs() < 1e-9);
        assert!(!c.fail);
        assert!(metric_change(0.60, 0.30, Direction::Enhance).fail);
        let same = metric_change(0.4, 0.4, Direction::Enhance);
        assert_eq!(same.relative, Relative::Value(0.0));
        assert!(!same.fail);
    }

    #[test]
    fn zero_original_is_undefined() {
        let c = metric_change(0.0, 0.2, Direction::Enhance);
        assert_eq!(c.relative, Relative::UNDEFINED);
        assert!(!c.fail);
        assert_eq!(serde_json::to_string(&c.relative).unwrap(), "\"undefined\"");
        assert_eq!(serde_json::from_str::<Relative>("\"undefined\"").unwrap(), Relative::UNDEFINED);
        assert_eq!(serde_json::from_str::<Relative>("12.5").unwrap(), Relative::Value(12.5));
    }

    #[test]
    fn flips_counted_over_previously_right() {
        let before = vec![rec("a", 1, true), rec("a", 2, true), rec("a", 3, false)];
        let after = vec![rec("a", 1, false), rec("a", 2, true), rec("a", 3, true)];
        assert_eq!(flip_rate(&before, &after), Some(0.5));
    }
}
