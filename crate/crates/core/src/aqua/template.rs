use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{letter, QAExample};
use crate::error::{Error, Result};
use crate::tokenizer::{self, Tokenizer};

const DEFAULT: &str = include_str!("../../templates/default.toml");
const COMPACT: &str = include_str!("../../templates/compact.toml");

/// Prompt layout loaded from a TOML data file. Sections are emitted in the
/// order role, rule, demonstration, question; a role or rule section is
/// dropped when the example's text for it is empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub version: u32,
    /// Uses `{role}`.
    pub role: String,
    /// Uses `{rule}`.
    pub rule: String,
    /// Uses `{stem}`, `{options}`, `{answer}`.
    pub demonstration: String,
    /// Uses `{stem}`, `{options}`; must end where the answer letter goes.
    pub question: String,
    /// Uses `{letter}`, `{text}`.
    pub option: String,
    pub option_separator: String,
    pub section_separator: String,
    pub require_demonstration: bool,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::from_toml(DEFAULT).expect("bundled template parses")
    }
}

impl PromptTemplate {
    pub fn from_toml(text: &str) -> Result<Self> {
        let t: Self = toml::from_str(text).map_err(|e| Error::Template(e.to_string()))?;
        if t.version != 1 {
            return Err(Error::Template(format!("unsupported template version {}", t.version)));
        }
        Ok(t)
    }

    /// Bundled template without role, rule or worked example.
    pub fn compact() -> Self {
        Self::from_toml(COMPACT).expect("bundled template parses")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("template serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

fn render(slot: &str, fmt: &str, vars: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(fmt.len() + 64);
    let mut chars = fmt.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                out.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                out.push('}');
            }
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(ch) => name.push(ch),
                        None => return Err(Error::Template(format!("{slot}: unterminated placeholder"))),
                    }
                }
                let value = vars
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| Error::Template(format!("{slot}: placeholder {{{name}}} is not available here")))?;
                out.push_str(value);
            }
            '}' => return Err(Error::Template(format!("{slot}: stray '}}'"))),
            _ => out.push(c),
        }
    }
    Ok(out)
}

fn option_block(t: &PromptTemplate, options: &[String; 4]) -> Result<String> {
    let rendered = options
        .iter()
        .enumerate()
        .map(|(i, text)| render("option", &t.option, &[("letter", letter(i)), ("text", text)]))
        .collect::<Result<Vec<_>>>()?;
    Ok(rendered.join(&t.option_separator))
}

/// The prompt as text, ending where the answer letter is expected.
pub fn compose_prompt_text(example: &QAExample, template: &PromptTemplate) -> Result<String> {
    let mut sections = Vec::with_capacity(4);
    if !example.role.trim().is_empty() {
        sections.push(render("role", &template.role, &[("role", &example.role)])?);
    }
    if !example.rule.trim().is_empty() {
        sections.push(render("rule", &template.rule, &[("rule", &example.rule)])?);
    }
    match &example.demonstration {
        Some(d) => {
            let options = option_block(template, &d.options)?;
            sections.push(render(
                "demonstration",
                &template.demonstration,
                &[("stem", &d.stem), ("options", &options), ("answer", letter(d.correct_index))],
            )?);
        }
        None if template.require_demonstration => {
            return Err(Error::Template(format!("{}: template requires a demonstration", example.id)));
        }
        None => {}
    }
    let options = option_block(template, &example.options)?;
    sections.push(render("question", &template.question, &[("stem", &example.stem), ("options", &options)])?);
    Ok(sections.join(&template.section_separator))
}

fn check_option_text(id: &str, text: &str) -> Result<()> {
    let words = tokenizer::split(text);
    if words.is_empty() || words.iter().any(|w| tokenizer::LETTERS.contains(w)) {
        return Err(Error::Template(format!(
            "{id}: option text {text:?} would be confused with the letter labels"
        )));
    }
    Ok(())
}

/// Token ids of the composed prompt.
pub fn compose_prompt(example: &QAExample, template: &PromptTemplate, tokenizer: &Tokenizer) -> Result<Vec<usize>> {
    example.validate()?;
    let demo_options = example.demonstration.iter().flat_map(|d| d.options.iter());
    for text in example.options.iter().chain(demo_options) {
        check_option_text(&example.id, text)?;
    }
    Ok(tokenizer.encode(&compose_prompt_text(example, template)?))
}

/// Template plus tokenizer: turns questions into model inputs.
#[derive(Debug, Clone, Copy)]
pub struct Prompter<'a> {
    pub template: &'a PromptTemplate,
    pub tokenizer: &'a Tokenizer,
}

impl<'a> Prompter<'a> {
    pub fn new(template: &'a PromptTemplate, tokenizer: &'a Tokenizer) -> Self {
        Self { template, tokenizer }
    }

    pub fn tokens(&self, example: &QAExample) -> Result<Vec<usize>> {
        compose_prompt(example, self.template, self.tokenizer)
    }

    pub fn letter_ids(&self) -> [usize; 4] {
        self.tokenizer.letter_ids()
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::sentiment;
    use super::super::generate_proxies;
    use super::*;

    #[test]
    fn default_prompt_layout() {
        let text = compose_prompt_text(&sentiment("s"), &PromptTemplate::default()).unwrap();
        assert_eq!(
            text,
            "You are a sentiment analyst .\n\
             Pick the sentiment of the review .\n\
             Example : a dull and tiring plot A . positive B . unsure C . negative D . neutral Answer : C\n\
             Question : the film was wonderful A . negative B . positive C . neutral D . unsure Answer :"
        );
    }

    #[test]
    fn empty_rule_drops_section() {
        let mut e = sentiment("s");
        e.rule.clear();
        let t = PromptTemplate::default();
        let full = compose_prompt_text(&sentiment("s"), &t).unwrap();
        let short = compose_prompt_text(&e, &t).unwrap();
        let dropped: Vec<&str> = full.lines().filter(|l| !l.starts_with("Pick")).collect();
        assert_eq!(short.lines().collect::<Vec<_>>(), dropped);
    }

    #[test]
    fn missing_demonstration_is_an_error_when_required() {
        let mut e = sentiment("s");
        e.demonstration = None;
        let mut t = PromptTemplate::default();
        assert!(compose_prompt_text(&e, &t).is_err());
        t.require_demonstration = false;
        assert!(compose_prompt_text(&e, &t).unwrap().starts_with("You are"));
    }

    #[test]
    fn letter_like_option_text_rejected() {
        let mut e = sentiment("s");
        e.options[3] = "B".into();
        let tok = Tokenizer::build([compose_prompt_text(&sentiment("s"), &PromptTemplate::default()).unwrap().as_str()]);
        assert!(compose_prompt(&e, &PromptTemplate::default(), &tok).is_err());
    }

    #[test]
    fn proxy_prompts_differ_only_in_question_options() {
        let t = PromptTemplate::default();
        let set = generate_proxies(&sentiment("s"), 11).unwrap();
        let texts: Vec<String> = set.proxies.iter().map(|p| compose_prompt_text(p, &t).unwrap()).collect();
        let lines: Vec<Vec<&str>> = texts.iter().map(|s| s.lines().collect()).collect();
        for l in &lines[1..] {
            assert_eq!(l[..3], lines[0][..3]);
            let prefix = "Question : the film was wonderful ";
            assert!(l[3].starts_with(prefix) && l[3].ends_with(" Answer :"));
        }
        let tok = Tokenizer::build(texts.iter().map(String::as_str));
        for p in &set.proxies {
            let ids = compose_prompt(p, &t, &tok).unwrap();
            assert!(!ids.contains(&crate::tokenizer::UNK_ID));
            assert_eq!(tok.token(*ids.last().unwrap()), Some(":"));
        }
    }

    #[test]
    fn placeholder_grammar() {
        assert_eq!(render("x", "{{a}} {b}", &[("b", "v")]).unwrap(), "{a} v");
        assert!(render("x", "{nope}", &[]).is_err());
        assert!(render("x", "{open", &[]).is_err());
        assert!(render("x", "a } b", &[]).is_err());
        let t = PromptTemplate::default();
        assert_eq!(PromptTemplate::from_toml(&t.to_toml()).unwrap(), t);
    }
}
