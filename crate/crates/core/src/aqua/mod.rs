//! Multiple-choice questions, option-permuted proxies and prompt assembly.

mod io;
mod proxies;
mod template;

pub use io::{read_examples, read_proxy_sets, write_examples, write_proxy_sets, SCHEMA_VERSION};
pub use proxies::{derive_seed, expand, generate_proxies, permutations_of_four, ProxySet};
pub use template::{compose_prompt, compose_prompt_text, PromptTemplate, Prompter};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A worked example shown before the question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub stem: String,
    pub options: [String; 4],
    pub correct_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub role: String,
    pub rule: String,
    pub stem: String,
    pub options: [String; 4],
    pub correct_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demonstration: Option<Demonstration>,
}

fn check_options(options: &[String; 4], correct: usize, what: &str) -> Result<()> {
    if correct > 3 {
        return Err(Error::InvalidExample(format!("{what}: correct index {correct} out of range")));
    }
    for (i, o) in options.iter().enumerate() {
        if o.trim().is_empty() {
            return Err(Error::InvalidExample(format!("{what}: option {i} is empty")));
        }
        if options[..i].contains(o) {
            return Err(Error::InvalidExample(format!("{what}: duplicate option {o:?}")));
        }
    }
    Ok(())
}

impl QAExample {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidExample("empty id".into()));
        }
        check_options(&self.options, self.correct_index, &self.id)?;
        if let Some(d) = &self.demonstration {
            check_options(&d.options, d.correct_index, &format!("{} demonstration", self.id))?;
        }
        Ok(())
    }

    pub fn correct_option(&self) -> &str {
        &self.options[self.correct_index]
    }
}

/// Letter shown for option slot `i`.
pub fn letter(i: usize) -> &'static str {
    crate::tokenizer::LETTERS[i]
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn sentiment(id: &str) -> QAExample {
        QAExample {
            id: id.into(),
            role: "You are a sentiment analyst .".into(),
            rule: "Pick the sentiment of the review .".into(),
            stem: "the film was wonderful".into(),
            options: ["negative".into(), "positive".into(), "neutral".into(), "unsure".into()],
            correct_index: 1,
            demonstration: Some(Demonstration {
                stem: "a dull and tiring plot".into(),
                options: ["positive".into(), "unsure".into(), "negative".into(), "neutral".into()],
                correct_index: 2,
            }),
        }
    }
}
