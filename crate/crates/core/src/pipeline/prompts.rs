//! Prompt templates (one file per step under `prompts/`) and tolerant
//! extraction of the JSON answer.

use std::sync::OnceLock;

use regex::{Captures, Regex};
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::llm::StepTag;

fn source(tag: StepTag) -> &'static str {
    match tag {
        StepTag::Summarize => include_str!("../../prompts/summarize.txt"),
        StepTag::RootCause => include_str!("../../prompts/root_cause.txt"),
        StepTag::Hint => include_str!("../../prompts/hint.txt"),
        StepTag::Ability => include_str!("../../prompts/ability.txt"),
        StepTag::Containment => include_str!("../../prompts/containment.txt"),
        StepTag::Verdict => include_str!("../../prompts/verdict.txt"),
        StepTag::Rank => include_str!("../../prompts/rank.txt"),
        StepTag::Statements => include_str!("../../prompts/statements.txt"),
    }
}

/// The `(system, user)` halves of a template.
pub fn template(tag: StepTag) -> (&'static str, &'static str) {
    let src = source(tag);
    let rest = src
        .strip_prefix("### system\n")
        .expect("templates start with a system section");
    let (system, user) = rest
        .split_once("\n### user\n")
        .expect("templates have a user section");
    (system.trim_end(), user.trim_end())
}

fn placeholder() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{([a-z_0-9]+)\}\}").unwrap())
}

/// Substitutes `{{name}}` placeholders in one pass; substituted text is not
/// scanned again. Unknown names render as empty text.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    placeholder()
        .replace_all(template, |c: &Captures| {
            vars.iter()
                .find(|(k, _)| *k == &c[1])
                .map(|(_, v)| v.to_string())
                .unwrap_or_default()
        })
        .into_owned()
}

pub fn render(tag: StepTag, vars: &[(&str, &str)]) -> (String, String) {
    let (system, user) = template(tag);
    (system.to_string(), fill(user, vars))
}

pub const REFORMAT: &str = "Your previous answer could not be parsed. Answer again with exactly one fenced ```json block in the requested form and no other text.";

fn fence() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[A-Za-z]*[ \t]*\n(.*?)```").unwrap())
}

/// Finds a JSON value in a completion: the first fenced block that parses,
/// else the whole text, else the outermost braces.
pub fn extract_json(text: &str) -> Option<Value> {
    for c in fence().captures_iter(text) {
        if let Ok(v) = serde_json::from_str(c[1].trim()) {
            return Some(v);
        }
    }
    if let Ok(v) = serde_json::from_str(text.trim()) {
        return Some(v);
    }
    let (a, b) = (text.find('{')?, text.rfind('}')?);
    (a < b).then(|| serde_json::from_str(&text[a..=b]).ok()).flatten()
}

pub fn parse_answer<T: DeserializeOwned>(text: &str) -> Option<T> {
    serde_json::from_value(extract_json(text)?).ok()
}
