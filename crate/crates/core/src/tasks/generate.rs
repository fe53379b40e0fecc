//! Synthetic multiple-choice task generators.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lexicon::{self, CATEGORIES, CUE_WORDS, DOT, FILLERS, MARKERS, MOODS, MOOD_WORDS, PARITY_LABELS};
use crate::aqua::{Demonstration, QAExample};
use crate::error::{Error, Result};

/// Task families, ordered from lexical lookup to counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    MarkerDetect,
    KeywordSentiment,
    CopyCue,
    ParityReason,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 4] = [Self::MarkerDetect, Self::KeywordSentiment, Self::CopyCue, Self::ParityReason];

    pub fn name(self) -> &'static str {
        match self {
            Self::MarkerDetect => "marker_detect",
            Self::KeywordSentiment => "keyword_sentiment",
            Self::CopyCue => "copy_cue",
            Self::ParityReason => "parity_reason",
        }
    }

    fn role_rule(self) -> (&'static str, &'static str) {
        match self {
            Self::MarkerDetect => ("You sort words into groups .", "Give the group of the key word in the text ."),
            Self::KeywordSentiment => ("You judge the mood of short notes .", "Give the mood that the note shows ."),
            Self::CopyCue => ("You repeat words .", "Give the word that follows cue ."),
            Self::ParityReason => ("You count dots .", "Say if the number of dot words is even or odd ."),
        }
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Task(format!("unknown task family {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub family: TaskFamily,
    /// Filler words used to pad stems. Empty means the built-in list.
    #[serde(default)]
    pub vocab: Vec<String>,
    pub n_train: usize,
    pub n_eval: usize,
    pub seed: u64,
}

impl TaskSpec {
    pub fn new(family: TaskFamily, n_train: usize, n_eval: usize, seed: u64) -> Self {
        Self { family, vocab: Vec::new(), n_train, n_eval, seed }
    }

    pub fn fillers(&self) -> Vec<String> {
        if self.vocab.is_empty() {
            FILLERS.iter().map(|s| s.to_string()).collect()
        } else {
            self.vocab.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train + self.n_eval == 0 {
            return Err(Error::Task("nothing to generate".into()));
        }
        let fillers = self.fillers();
        let unique: BTreeSet<&String> = fillers.iter().collect();
        if unique.len() != fillers.len() {
            return Err(Error::Task("filler vocabulary has duplicates".into()));
        }
        for w in &fillers {
            let pieces = crate::tokenizer::split(w);
            if pieces.len() != 1 || pieces[0] != w {
                return Err(Error::Task(format!("filler {w:?} is not a single token")));
            }
            if reserved(w) {
                return Err(Error::Task(format!("filler {w:?} collides with a task word")));
            }
        }
        Ok(())
    }
}

fn reserved(w: &str) -> bool {
    crate::tokenizer::LETTERS.contains(&w)
        || CATEGORIES.contains(&w)
        || MARKERS.iter().any(|m| m.contains(&w))
        || MOODS.contains(&w)
        || MOOD_WORDS.iter().any(|m| m.contains(&w))
        || CUE_WORDS.contains(&w)
        || PARITY_LABELS.contains(&w)
        || w == DOT
        || w == lexicon::CUE_MARK
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskData {
    pub spec: TaskSpec,
    pub train: Vec<QAExample>,
    pub eval: Vec<QAExample>,
}

/// One drawn item before slot assignment.
struct Item {
    stem: String,
    answer: String,
    distractors: [String; 3],
}

const STEM_WORDS: usize = 4;
const PARITY_SLOTS: usize = 6;

/// Number of distinct stems a family can produce.
fn capacity(family: TaskFamily, n_fillers: usize) -> f64 {
    let f = n_fillers as f64;
    match family {
        TaskFamily::MarkerDetect => 64.0 * STEM_WORDS as f64 * f.powi(STEM_WORDS as i32 - 1),
        TaskFamily::KeywordSentiment => 24.0 * STEM_WORDS as f64 * f.powi(STEM_WORDS as i32 - 1),
        // filler, cue, word, filler
        TaskFamily::CopyCue => CUE_WORDS.len() as f64 * f * f,
        // every slot is a dot or a filler, at least one dot
        TaskFamily::ParityReason => (f + 1.0).powi(PARITY_SLOTS as i32) - f.powi(PARITY_SLOTS as i32),
    }
}

fn with_marker(rng: &mut ChaCha8Rng, fillers: &[String], word: &str) -> String {
    let at = rng.random_range(0..STEM_WORDS);
    (0..STEM_WORDS)
        .map(|i| if i == at { word.to_string() } else { fillers.choose(rng).unwrap().clone() })
        .collect::<Vec<_>>()
        .join(" ")
}

fn draw_item(family: TaskFamily, rng: &mut ChaCha8Rng, fillers: &[String]) -> Item {
    match family {
        TaskFamily::MarkerDetect => {
            let c = rng.random_range(0..CATEGORIES.len());
            let marker = MARKERS[c].choose(rng).unwrap();
            let sib = lexicon::sibling(c);
            let others: Vec<usize> = (0..CATEGORIES.len()).filter(|&k| k != c && k != sib).collect();
            let picked: Vec<usize> = others.choose_multiple(rng, 2).copied().collect();
            Item {
                stem: with_marker(rng, fillers, marker),
                answer: CATEGORIES[c].into(),
                distractors: [CATEGORIES[sib].into(), CATEGORIES[picked[0]].into(), CATEGORIES[picked[1]].into()],
            }
        }
        TaskFamily::KeywordSentiment => {
            let c = rng.random_range(0..MOODS.len());
            let word = MOOD_WORDS[c].choose(rng).unwrap();
            let d: Vec<String> = (0..4).filter(|&k| k != c).map(|k| MOODS[k].to_string()).collect();
            Item {
                stem: with_marker(rng, fillers, word),
                answer: MOODS[c].into(),
                distractors: [d[0].clone(), d[1].clone(), d[2].clone()],
            }
        }
        TaskFamily::CopyCue => {
            let picked: Vec<&str> = CUE_WORDS.choose_multiple(rng, 4).copied().collect();
            let stem = format!(
                "{} {} {} {}",
                fillers.choose(rng).unwrap(),
                lexicon::CUE_MARK,
                picked[0],
                fillers.choose(rng).unwrap()
            );
            Item {
                stem,
                answer: picked[0].into(),
                distractors: [picked[1].into(), picked[2].into(), picked[3].into()],
            }
        }
        TaskFamily::ParityReason => {
            let mut words: Vec<String>;
            loop {
                words = (0..PARITY_SLOTS)
                    .map(|_| if rng.random_bool(0.4) { DOT.to_string() } else { fillers.choose(rng).unwrap().clone() })
                    .collect();
                if words.iter().any(|w| w == DOT) {
                    break;
                }
            }
            let dots = words.iter().filter(|w| *w == DOT).count();
            let (answer, other) = if dots % 2 == 0 { (0, 1) } else { (1, 0) };
            Item {
                stem: words.join(" "),
                answer: PARITY_LABELS[answer].into(),
                distractors: [PARITY_LABELS[other].into(), PARITY_LABELS[2].into(), PARITY_LABELS[3].into()],
            }
        }
    }
}

fn place(rng: &mut ChaCha8Rng, item: Item, slot: usize) -> ([String; 4], usize) {
    let mut rest = item.distractors.to_vec();
    rest.shuffle(rng);
    let mut rest = rest.into_iter();
    let options = std::array::from_fn(|i| if i == slot { item.answer.clone() } else { rest.next().unwrap() });
    (options, slot)
}

/// Deterministic train/eval split with disjoint stems and the correct slot
/// cycling through A-D within each split.
pub fn generate_task(spec: &TaskSpec) -> Result<TaskData> {
    spec.validate()?;
    let fillers = spec.fillers();
    let wanted = spec.n_train + spec.n_eval;
    let cap = capacity(spec.family, fillers.len());
    // Half the capacity keeps rejection sampling cheap.
    if wanted as f64 > cap / 2.0 {
        return Err(Error::Task(format!(
            "{}: {} examples requested but the vocabulary supports about {}",
            spec.family,
            wanted,
            (cap / 2.0).floor()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (spec.family as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let (role, rule) = spec.family.role_rule();
    let mut seen = BTreeSet::new();
    let mut split = |name: &str, n: usize| -> Vec<QAExample> {
        (0..n)
            .map(|i| {
                let item = loop {
                    let item = draw_item(spec.family, &mut rng, &fillers);
                    if seen.insert(item.stem.clone()) {
                        break item;
                    }
                };
                let stem = item.stem.clone();
                let (options, correct_index) = place(&mut rng, item, i % 4);
                let demo = draw_item(spec.family, &mut rng, &fillers);
                let demo_stem = demo.stem.clone();
                let slot = rng.random_range(0..4);
                let (demo_options, demo_index) = place(&mut rng, demo, slot);
                QAExample {
                    id: format!("{}-{name}-{i:04}", spec.family),
                    role: role.into(),
                    rule: rule.into(),
                    stem,
                    options,
                    correct_index,
                    demonstration: Some(Demonstration { stem: demo_stem, options: demo_options, correct_index: demo_index }),
                }
            })
            .collect()
    };
    let train = split("train", spec.n_train);
    let eval = split("eval", spec.n_eval);
    Ok(TaskData { spec: spec.clone(), train, eval })
}

/// Index of the marker category named in a marker-task stem.
pub fn marker_category(stem: &str) -> Option<usize> {
    stem.split_whitespace().find_map(|w| MARKERS.iter().position(|m| m.contains(&w)))
}

/// Slot holding the sibling category of the marker, if present.
pub fn lure_slot(example: &QAExample) -> Option<usize> {
    let c = marker_category(&example.stem)?;
    let sib = CATEGORIES[lexicon::sibling(c)];
    example.options.iter().position(|o| o == sib)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marker_stem_names_the_correct_category() {
        let data = generate_task(&TaskSpec::new(TaskFamily::MarkerDetect, 40, 20, 3)).unwrap();
        for ex in data.train.iter().chain(&data.eval) {
            ex.validate().unwrap();
            let c = marker_category(&ex.stem).unwrap();
            assert_eq!(ex.correct_option(), CATEGORIES[c]);
            assert!(lure_slot(ex).is_some());
            assert_ne!(lure_slot(ex), Some(ex.correct_index));
        }
    }

    #[test]
    fn correct_slots_are_balanced() {
        for family in TaskFamily::ALL {
            let data = generate_task(&TaskSpec::new(family, 400, 0, 11)).unwrap();
            let mut counts = [0usize; 4];
            for ex in &data.train {
                counts[ex.correct_index] += 1;
            }
            for c in counts {
                assert!((90..=110).contains(&c), "{family}: {counts:?}");
            }
        }
    }

    #[test]
    fn same_seed_same_data_and_splits_are_disjoint() {
        for family in TaskFamily::ALL {
            let spec = TaskSpec::new(family, 50, 30, 5);
            let a = generate_task(&spec).unwrap();
            assert_eq!(a, generate_task(&spec).unwrap());
            let train: BTreeSet<_> = a.train.iter().map(|e| &e.stem).collect();
            assert!(a.eval.iter().all(|e| !train.contains(&e.stem)));
            let other = generate_task(&TaskSpec { seed: 6, ..spec }).unwrap();
            assert_ne!(a, other);
        }
    }

    #[test]
    fn answers_follow_the_family_rule() {
        let data = generate_task(&TaskSpec::new(TaskFamily::ParityReason, 30, 0, 1)).unwrap();
        for ex in &data.train {
            let dots = ex.stem.split_whitespace().filter(|w| *w == DOT).count();
            assert_eq!(ex.correct_option(), if dots % 2 == 0 { "even" } else { "odd" });
        }
        let data = generate_task(&TaskSpec::new(TaskFamily::CopyCue, 30, 0, 1)).unwrap();
        for ex in &data.train {
            let w: Vec<&str> = ex.stem.split_whitespace().collect();
            assert_eq!(ex.correct_option(), w[2]);
        }
        let data = generate_task(&TaskSpec::new(TaskFamily::KeywordSentiment, 30, 0, 1)).unwrap();
        for ex in &data.train {
            let mood = MOOD_WORDS.iter().position(|m| ex.stem.split_whitespace().any(|w| m.contains(&w))).unwrap();
            assert_eq!(ex.correct_option(), MOODS[mood]);
        }
    }

    #[test]
    fn small_vocabulary_is_rejected() {
        let spec = TaskSpec { vocab: vec!["the".into()], ..TaskSpec::new(TaskFamily::CopyCue, 20, 0, 1) };
        assert!(matches!(generate_task(&spec), Err(Error::Task(_))));
        let spec = TaskSpec { vocab: vec!["horse".into()], ..TaskSpec::new(TaskFamily::CopyCue, 1, 0, 1) };
        assert!(generate_task(&spec).is_err());
    }
}
