//! Line-level noise classification used by the noise-filtering SZZ variant.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChangedLine, Hunk, HunkLine, LineKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    C,
    Java,
}

impl Language {
    pub fn from_path(path: &str) -> Option<Language> {
        let ext = Path::new(path).extension()?.to_str()?;
        match ext.to_ascii_lowercase().as_str() {
            "c" | "h" => Some(Language::C),
            "java" => Some(Language::Java),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseClass {
    Blank,
    Comment,
    Code,
}

/// Stateless per-line classification.
///
/// A line is a comment when all of its non-whitespace content sits inside a
/// comment: `//...`, a `/* ... */` closed at the end of the line, an opening
/// `/*` that is never closed on the line, or a block-continuation line that
/// starts with `*` followed by whitespace, `/`, `*` or nothing. A leading
/// `*p = 0;` (pointer dereference) is code. C and Java share these rules.
pub fn classify_noise(text: &str, _language: Language) -> NoiseClass {
    let t = text.trim();
    if t.is_empty() {
        return NoiseClass::Blank;
    }
    if t.starts_with("//") {
        return NoiseClass::Comment;
    }
    if let Some(rest) = t.strip_prefix("/*") {
        return match rest.find("*/") {
            None => NoiseClass::Comment,
            Some(pos) if pos + 2 == rest.len() => NoiseClass::Comment,
            Some(_) => NoiseClass::Code,
        };
    }
    if let Some(rest) = t.strip_prefix('*') {
        let continuation = match rest.chars().next() {
            None => true,
            Some(c) => c.is_whitespace() || c == '/' || c == '*',
        };
        // "* x = y;" style code would need a leading dereference followed by a space.
        if continuation && !looks_like_statement(rest) {
            return NoiseClass::Comment;
        }
    }
    NoiseClass::Code
}

fn looks_like_statement(rest: &str) -> bool {
    let r = rest.trim();
    r.ends_with(';') && !r.ends_with("*/")
}

pub fn strip_whitespace(text: &str) -> String {
    text.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Old-side line numbers of deletions that only change whitespace: a deleted
/// line whose whitespace-stripped text equals that of an added line in the
/// same hunk. Each added line pairs with at most one deletion.
pub fn cosmetic_deletions(hunk: &Hunk) -> BTreeSet<usize> {
    let mut added: Vec<(String, bool)> = hunk
        .changed()
        .filter(|c| c.kind == LineKind::Added)
        .map(|c| (strip_whitespace(&c.text), false))
        .collect();
    let mut out = BTreeSet::new();
    for line in &hunk.lines {
        let HunkLine::Changed(ChangedLine {
            kind: LineKind::Deleted,
            old_no: Some(old_no),
            text,
            ..
        }) = line
        else {
            continue;
        };
        let key = strip_whitespace(text);
        if key.is_empty() {
            continue;
        }
        if let Some(slot) = added.iter_mut().find(|(k, used)| !*used && *k == key) {
            slot.1 = true;
            out.insert(*old_no);
        }
    }
    out
}
