//! Whitespace-and-punctuation word tokenizer with a corpus-built vocabulary.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const UNK_ID: usize = 0;
pub const LETTERS: [&str; 4] = ["A", "B", "C", "D"];
const HEADER: &str = "# neuroprobe vocab v1";

/// Splits on whitespace; every ASCII punctuation character becomes its own
/// token. Case is preserved.
pub fn split(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut start = 0;
        for (i, c) in word.char_indices() {
            if c.is_ascii_punctuation() {
                if start < i {
                    out.push(&word[start..i]);
                }
                out.push(&word[i..i + 1]);
                start = i + 1;
            }
        }
        if start < word.len() {
            out.push(&word[start..]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Tokenizer {
    /// Id 0 is the unknown token, ids 1..=4 are the letters A-D, the rest
    /// of the corpus vocabulary follows in sorted order.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>) -> Self {
        let mut words = BTreeSet::new();
        for text in corpus {
            for t in split(text) {
                words.insert(t.to_string());
            }
        }
        let mut tokens: Vec<String> = std::iter::once(UNK).chain(LETTERS).map(String::from).collect();
        tokens.extend(words.into_iter().filter(|w| w != UNK && !LETTERS.contains(&w.as_str())));
        Self::from_tokens(tokens).expect("constructed vocabulary is valid")
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 5 || tokens[0] != UNK || tokens[1..5] != LETTERS {
            return Err(Error::Tokenizer("vocabulary must start with <unk>, A, B, C, D".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Tokenizer(format!("invalid token {t:?} at id {i}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Tokenizer(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Token ids of A, B, C, D.
    pub fn letter_ids(&self) -> [usize; 4] {
        [1, 2, 3, 4]
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        split(text).into_iter().map(|t| self.id(t).unwrap_or(UNK_ID)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(UNK))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(HEADER);
        s.push('\n');
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(Error::Tokenizer(format!("missing header line {HEADER:?}")));
        }
        Self::from_tokens(lines.map(String::from).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation_and_whitespace() {
        assert_eq!(split("Answer: A. the  cat's"), vec!["Answer", ":", "A", ".", "the", "cat", "'", "s"]);
        assert!(split("   ").is_empty());
    }

    #[test]
    fn letters_are_reserved_and_unknowns_map_to_unk() {
        let tok = Tokenizer::build(["B zebra apple", "A : zebra"]);
        assert_eq!(tok.token(0), Some(UNK));
        assert_eq!(tok.encode("A B C D"), vec![1, 2, 3, 4]);
        assert_eq!(tok.encode("apple : zebra mango"), vec![6, 5, 7, UNK_ID]);
        // sorted order: ":" < "apple" < "zebra" in byte order
        assert_eq!(tok.id(":"), Some(5));
        assert_eq!(tok.vocab_size(), 8);
    }

    #[test]
    fn text_round_trip() {
        let tok = Tokenizer::build(["hello world ."]);
        assert_eq!(Tokenizer::from_text(&tok.to_text()).unwrap(), tok);
        assert!(Tokenizer::from_text("a\nb\n").is_err());
    }
}
