//! Synthetic tasks, training, and the planted-circuit model.

mod generate;
pub mod lexicon;
mod planted;
mod train;

pub use generate::{generate_task, lure_slot, marker_category, TaskData, TaskFamily, TaskSpec};
pub use planted::{build_planted, verify_planted, PlantedCheck, PlantedModel, PlantedSpec};
pub use train::{mean_loss, train, CurvePoint, LossMask, QuestionSampler, TrainCurve, TrainSeq, TrainSettings};

use crate::aqua::{compose_prompt_text, PromptTemplate, QAExample};
use crate::error::Result;
use crate::tokenizer::Tokenizer;

/// Vocabulary covering every prompt of `examples` plus all task words, so a
/// tokenizer built once serves every family.
pub fn build_tokenizer<'a>(template: &PromptTemplate, examples: impl IntoIterator<Item = &'a QAExample>) -> Result<Tokenizer> {
    let mut corpus: Vec<String> = examples
        .into_iter()
        .map(|e| compose_prompt_text(e, template))
        .collect::<Result<_>>()?;
    corpus.push(lexicon::all_words().join(" "));
    Ok(Tokenizer::build(corpus.iter().map(String::as_str)))
}

#[cfg(test)]
mod tests;
