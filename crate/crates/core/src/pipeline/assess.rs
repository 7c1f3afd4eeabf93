use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prepare::RootCauseAnalysis;
use super::session::Session;
use crate::context::{expand_context_with, refine_versions, resolve_statements, Region, RegionKind};
use crate::error::{PipelineError, RepoError};
use crate::llm::StepTag;
use crate::repo::{CommitId, FileChange, FileVersion, Repo};

/// Rendered expanded context above this size is sent in several calls.
pub const MAX_CONTEXT_CHARS: usize = 48_000;

/// A statement reported by the model, resolved to lines of `path`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub path: String,
    pub text: String,
    pub reason: String,
    pub lines: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hint {
    /// Resolved against the buggy version (the fix's first parent).
    pub buggy_statements: Vec<Statement>,
    pub fixing_statements: Vec<Statement>,
}

impl Hint {
    pub fn is_empty(&self) -> bool {
        self.buggy_statements.is_empty()
    }

    /// Buggy lines grouped by path in the buggy version.
    pub fn buggy_lines(&self) -> BTreeMap<String, BTreeSet<usize>> {
        let mut out: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        for s in &self.buggy_statements {
            out.entry(s.path.clone()).or_default().extend(&s.lines);
        }
        out
    }

    pub fn render_buggy(&self) -> String {
        render_list(&self.buggy_statements)
    }

    pub fn render_fixing(&self) -> String {
        render_list(&self.fixing_statements)
    }
}

fn render_list(stmts: &[Statement]) -> String {
    if stmts.is_empty() {
        return "(none)\n".into();
    }
    let mut out = String::new();
    for s in stmts {
        out.push_str(&format!("- {}\n", s.text.trim()));
        if !s.reason.is_empty() {
            out.push_str(&format!("  reason: {}\n", s.reason.trim()));
        }
    }
    out
}

/// A statement as answered: plain text or an object with a reason.
#[derive(Deserialize)]
#[serde(untagged)]
pub(crate) enum StatementAnswer {
    Text(String),
    WithReason {
        statement: String,
        #[serde(default)]
        reason: String,
    },
}

impl StatementAnswer {
    pub(crate) fn into_parts(self) -> (String, String) {
        match self {
            StatementAnswer::Text(t) => (t, String::new()),
            StatementAnswer::WithReason { statement, reason } => (statement, reason),
        }
    }
}

#[derive(Deserialize)]
struct HintAnswer {
    #[serde(default)]
    buggy_statements: Vec<StatementAnswer>,
    #[serde(default)]
    fixing_statements: Vec<StatementAnswer>,
}

/// The change record of a relevant path.
pub(crate) fn change_of(repo: &Repo, fix: &CommitId, path: &str) -> Result<Option<FileChange>, RepoError> {
    Ok(repo.changed_files(fix)?.into_iter().find(|c| c.path() == path))
}

/// File versions before and after the fix; `None` for absent or binary
/// files.
pub(crate) fn versions(
    repo: &Repo,
    fix: &CommitId,
    change: &FileChange,
) -> Result<(Option<FileVersion>, Option<FileVersion>), RepoError> {
    let meta = repo.meta(fix)?;
    let text = |r: Result<Option<FileVersion>, RepoError>| match r {
        Err(RepoError::BinaryFile(_)) => Ok(None),
        other => other,
    };
    let old = match (meta.first_parent(), &change.old_path) {
        (Some(parent), Some(p)) => text(repo.file_at(parent, p))?,
        _ => None,
    };
    let new = match &change.new_path {
        Some(p) => text(repo.file_at(fix, p))?,
        None => None,
    };
    Ok((old, new))
}

fn chunk_regions(header: &str, regions: &[Region]) -> Vec<String> {
    let mut chunks = Vec::new();
    let mut cur = header.to_string();
    for r in regions {
        let mut block = match (&r.kind, &r.name) {
            (RegionKind::Function, Some(name)) => format!("Function {name}:\n"),
            _ => "Changed lines:\n".to_string(),
        };
        block.push_str(&r.rendered_diff);
        if cur.len() > header.len() && cur.len() + block.len() > MAX_CONTEXT_CHARS {
            chunks.push(std::mem::replace(&mut cur, header.to_string()));
        }
        cur.push_str(&block);
    }
    if cur.len() > header.len() {
        chunks.push(cur);
    }
    chunks
}

/// Asks for buggy and fixing statements over the expanded context of each
/// relevant file and resolves them to line numbers. Unresolvable statements
/// are dropped with a diagnostic.
pub fn generate_hint(
    session: &mut Session,
    repo: &Repo,
    fix: &CommitId,
    analysis: &RootCauseAnalysis,
) -> Result<Hint, PipelineError> {
    let message = repo.meta(fix)?.message;
    let margin = session.config.pipeline.window_lines;
    let mut hint = Hint::default();
    for path in &analysis.relevant_files {
        let Some(change) = change_of(repo, fix, path)? else {
            continue;
        };
        let (old, new) = versions(repo, fix, &change)?;
        let Some(old) = old else {
            session.note(format!("hint: {path} has no buggy version, skipped"));
            continue;
        };
        let ctx = expand_context_with(repo, fix, path, margin)?;
        let header = format!("File: {path}\n");
        for chunk in chunk_regions(&header, &ctx.regions) {
            let answer: Option<HintAnswer> = session.ask_soft(
                StepTag::Hint,
                &[
                    ("root_cause", &analysis.root_cause),
                    ("message", &message),
                    ("file", path),
                    ("context", &chunk),
                ],
            )?;
            let Some(answer) = answer else {
                continue;
            };
            for (text, reason) in answer.buggy_statements.into_iter().map(StatementAnswer::into_parts) {
                push_resolved(session, &mut hint.buggy_statements, &old, None, text, reason, "buggy");
            }
            for (text, reason) in answer.fixing_statements.into_iter().map(StatementAnswer::into_parts) {
                let primary = new.as_ref().unwrap_or(&old);
                push_resolved(session, &mut hint.fixing_statements, primary, Some(&old), text, reason, "fixing");
            }
        }
    }
    session.note(format!(
        "hint: {} buggy and {} fixing statements resolved",
        hint.buggy_statements.len(),
        hint.fixing_statements.len()
    ));
    Ok(hint)
}

fn push_resolved(
    session: &mut Session,
    out: &mut Vec<Statement>,
    file: &FileVersion,
    fallback: Option<&FileVersion>,
    text: String,
    reason: String,
    kind: &str,
) {
    let (mut lines, _) = resolve_statements(file, std::slice::from_ref(&text));
    let mut target = file;
    if lines.is_empty() {
        if let Some(fb) = fallback {
            lines = resolve_statements(fb, std::slice::from_ref(&text)).0;
            target = fb;
        }
    }
    if lines.is_empty() {
        session.note(format!("hint: dropped unresolvable {kind} statement {:?}", text.trim()));
        return;
    }
    if out.iter().any(|s| s.path == target.path && s.text == text) {
        return;
    }
    out.push(Statement {
        path: target.path.clone(),
        text,
        reason,
        lines: lines.into_iter().collect(),
    });
}

#[derive(Deserialize)]
struct AbilityAnswer {
    version_1: String,
    version_2: String,
}

/// Buggy or clean, read from a free-form label.
pub(crate) fn label(s: &str) -> Option<bool> {
    let s = s.trim().to_ascii_lowercase();
    match s.as_str() {
        "buggy" | "bug" | "yes" | "contains bug" | "contains the bug" => Some(true),
        "clean" | "correct" | "fixed" | "no" | "not buggy" | "bug-free" => Some(false),
        _ => None,
    }
}

pub(crate) fn render_slices(slices: &[(String, String)]) -> String {
    if slices.is_empty() {
        return "(empty: the file does not exist in this version)\n".into();
    }
    slices
        .iter()
        .map(|(path, text)| format!("File: {path}\n{text}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Whether the model tells the buggy slice (fix^1) from the fixed slice
/// (fix) when both are shown in a seeded random order.
pub fn ability_check(
    session: &mut Session,
    repo: &Repo,
    fix: &CommitId,
    analysis: &RootCauseAnalysis,
    hint: &Hint,
) -> Result<bool, PipelineError> {
    let margin = session.config.pipeline.initial_margin;
    let changes = repo.changed_files(fix)?;
    let mut buggy_slices = Vec::new();
    let mut fixed_slices = Vec::new();
    for (old_path, lines) in hint.buggy_lines() {
        let Some(change) = changes.iter().find(|c| c.old_path.as_deref() == Some(old_path.as_str())) else {
            continue;
        };
        let (Some(old), new) = versions(repo, fix, change)? else {
            continue;
        };
        let (b, f) = refine_versions(&old, new.as_ref(), &lines, margin);
        buggy_slices.push((old_path.clone(), b.text));
        if let Some(f) = f {
            fixed_slices.push((f.path.clone(), f.text));
        }
    }
    if buggy_slices.is_empty() {
        session.note("ability: no refined context");
        return Ok(false);
    }
    let buggy_text = render_slices(&buggy_slices);
    let fixed_text = render_slices(&fixed_slices);
    let mut rng = ChaCha8Rng::seed_from_u64(session.seed_for(fix, "ability", 0));
    let buggy_first: bool = rng.gen();
    let (v1, v2) = if buggy_first {
        (&buggy_text, &fixed_text)
    } else {
        (&fixed_text, &buggy_text)
    };
    let answer: Option<AbilityAnswer> = session.ask_soft(
        StepTag::Ability,
        &[
            ("root_cause", &analysis.root_cause),
            ("buggy_statements", &hint.render_buggy()),
            ("fixing_statements", &hint.render_fixing()),
            ("version_1", v1),
            ("version_2", v2),
        ],
    )?;
    let Some(answer) = answer else {
        session.note("ability: no usable answer, treated as failed");
        return Ok(false);
    };
    let (l1, l2) = (label(&answer.version_1), label(&answer.version_2));
    let (on_buggy, on_fixed) = if buggy_first { (l1, l2) } else { (l2, l1) };
    let passed = on_buggy == Some(true) && on_fixed == Some(false);
    session.note(format!(
        "ability: buggy version shown as Version-{}, labels {:?}/{:?}, passed={passed}",
        if buggy_first { 1 } else { 2 },
        answer.version_1,
        answer.version_2
    ));
    Ok(passed)
}
