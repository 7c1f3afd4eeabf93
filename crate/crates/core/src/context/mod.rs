//! Context given to the model: whole modified functions with their diffs,
//! windows around changes outside functions, and narrow slices around
//! buggy statements.

mod functions;
mod refine;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::diff::{edit_script, strip_whitespace, ChangedLine, EditOp, Language, LineKind};
use crate::error::RepoError;
use crate::repo::{ChangeStatus, CommitId, FileVersion, Repo};

pub use functions::{extract_function_spans, FunctionSpan};
pub use refine::{refine_context, refine_versions, RefinedContext, INITIAL_MARGIN};

pub const WINDOW_LINES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Function,
    Window,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub kind: RegionKind,
    /// Function name(s) for function regions.
    pub name: Option<String>,
    /// Inclusive 1-based line range on each side; `None` when the side is
    /// empty.
    pub old_range: Option<(usize, usize)>,
    pub new_range: Option<(usize, usize)>,
    pub old_text: String,
    pub new_text: String,
    pub rendered_diff: String,
    pub changed: Vec<ChangedLine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedContext {
    pub fix: CommitId,
    pub path: String,
    pub old_path: Option<String>,
    pub regions: Vec<Region>,
}

impl ExpandedContext {
    /// Prompt text: one block per region.
    pub fn render(&self) -> String {
        let mut out = format!("File: {}\n", self.path);
        for r in &self.regions {
            match (&r.kind, &r.name) {
                (RegionKind::Function, Some(name)) => {
                    let _ = writeln!(out, "Function {name}:");
                }
                _ => out.push_str("Changed lines:\n"),
            }
            out.push_str(&r.rendered_diff);
        }
        out
    }

    pub fn changed_lines(&self) -> impl Iterator<Item = &ChangedLine> {
        self.regions.iter().flat_map(|r| r.changed.iter())
    }
}

/// `lineno: text` rendering of `lines[first-1..last]`.
pub fn number_lines(lines: &[String], first: usize, last: usize) -> String {
    let mut out = String::new();
    for n in first..=last {
        let _ = writeln!(out, "{n}: {}", lines[n - 1]);
    }
    out
}

/// Expanded context of `path` (the path after the fix, or the deleted path)
/// in commit `fix`.
pub fn expand_context(repo: &Repo, fix: &CommitId, path: &str) -> Result<ExpandedContext, RepoError> {
    expand_context_with(repo, fix, path, WINDOW_LINES)
}

/// [`expand_context`] with a custom window margin.
pub fn expand_context_with(
    repo: &Repo,
    fix: &CommitId,
    path: &str,
    margin: usize,
) -> Result<ExpandedContext, RepoError> {
    let meta = repo.meta(fix)?;
    let change = repo
        .changed_files(fix)?
        .into_iter()
        .find(|c| c.new_path.as_deref() == Some(path) || (c.status == ChangeStatus::Deleted && c.old_path.as_deref() == Some(path)))
        .ok_or_else(|| RepoError::FileAbsent {
            rev: fix.to_string(),
            path: path.to_string(),
        })?;
    let old = match (meta.first_parent(), &change.old_path) {
        (Some(p), Some(old_path)) => repo.file_at(p, old_path)?.map(|f| f.lines),
        _ => None,
    }
    .unwrap_or_default();
    let new = match &change.new_path {
        Some(new_path) => repo.file_at(fix, new_path)?.map(|f| f.lines),
        None => None,
    }
    .unwrap_or_default();
    let language = Language::from_path(path);
    let regions = expand_versions(&old, &new, language, margin);
    Ok(ExpandedContext {
        fix: fix.clone(),
        path: path.to_string(),
        old_path: change.old_path,
        regions,
    })
}

/// Region construction over two text versions. Regions are disjoint
/// intervals of the edit script.
pub fn expand_versions(
    old: &[String],
    new: &[String],
    language: Option<Language>,
    margin: usize,
) -> Vec<Region> {
    let ops = edit_script(old, new);
    if ops.is_empty() {
        return Vec::new();
    }
    // Edit-script position of each old and new line.
    let mut pos_old = vec![0; old.len()];
    let mut pos_new = vec![0; new.len()];
    for (i, op) in ops.iter().enumerate() {
        match *op {
            EditOp::Equal { old: o, new: n } => {
                pos_old[o] = i;
                pos_new[n] = i;
            }
            EditOp::Delete { old: o } => pos_old[o] = i,
            EditOp::Insert { new: n } => pos_new[n] = i,
        }
    }
    let is_change = |i: usize| !matches!(ops[i], EditOp::Equal { .. });

    // Function intervals that contain at least one change.
    let mut funcs: Vec<(usize, usize, Vec<String>)> = Vec::new();
    if let Some(lang) = language {
        for (spans, pos) in [
            (functions::spans_in_lines(old, lang), &pos_old),
            (functions::spans_in_lines(new, lang), &pos_new),
        ] {
            for (name, s, e) in spans {
                let (lo, hi) = (pos[s - 1], pos[e - 1]);
                if (lo..=hi).any(is_change) {
                    funcs.push((lo, hi, vec![name]));
                }
            }
        }
    }
    funcs.sort_by_key(|f| (f.0, f.1));
    let mut merged: Vec<(usize, usize, Vec<String>)> = Vec::new();
    for (lo, hi, names) in funcs {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => {
                last.1 = last.1.max(hi);
                for n in names {
                    if !last.2.contains(&n) {
                        last.2.push(n);
                    }
                }
            }
            _ => merged.push((lo, hi, names)),
        }
    }
    let mut covered = vec![false; ops.len()];
    for (lo, hi, _) in &merged {
        covered[*lo..=*hi].iter_mut().for_each(|c| *c = true);
    }

    // Windows around uncovered changes.
    let mut windows: Vec<(usize, usize)> = Vec::new();
    for i in (0..ops.len()).filter(|&i| is_change(i) && !covered[i]) {
        if windows.last().is_some_and(|w| i <= w.1) {
            continue;
        }
        let mut lo = i;
        let mut used = 0;
        while lo > 0 && !covered[lo - 1] && (is_change(lo - 1) || used < margin) {
            if !is_change(lo - 1) {
                used += 1;
            }
            lo -= 1;
        }
        let mut hi = i;
        used = 0;
        while hi + 1 < ops.len() && !covered[hi + 1] && (is_change(hi + 1) || used < margin) {
            if !is_change(hi + 1) {
                used += 1;
            }
            hi += 1;
        }
        match windows.last_mut() {
            Some(w) if lo <= w.1 + 1 => w.1 = hi,
            _ => windows.push((lo, hi)),
        }
    }

    let mut regions: Vec<(usize, usize, RegionKind, Option<String>)> = merged
        .into_iter()
        .map(|(lo, hi, names)| (lo, hi, RegionKind::Function, Some(names.join(", "))))
        .chain(windows.into_iter().map(|(lo, hi)| (lo, hi, RegionKind::Window, None)))
        .collect();
    regions.sort_by_key(|r| r.0);
    regions
        .into_iter()
        .map(|(lo, hi, kind, name)| build_region(&ops[lo..=hi], old, new, kind, name))
        .collect()
}

fn build_region(
    ops: &[EditOp],
    old: &[String],
    new: &[String],
    kind: RegionKind,
    name: Option<String>,
) -> Region {
    let olds: Vec<usize> = ops
        .iter()
        .filter_map(|op| match *op {
            EditOp::Equal { old, .. } | EditOp::Delete { old } => Some(old + 1),
            EditOp::Insert { .. } => None,
        })
        .collect();
    let news: Vec<usize> = ops
        .iter()
        .filter_map(|op| match *op {
            EditOp::Equal { new, .. } | EditOp::Insert { new } => Some(new + 1),
            EditOp::Delete { .. } => None,
        })
        .collect();
    let range = |v: &[usize]| v.first().map(|&f| (f, *v.last().unwrap()));
    let old_range = range(&olds);
    let new_range = range(&news);

    let mut diff = String::new();
    let (os, ol) = old_range.map_or((0, 0), |(a, b)| (a, b - a + 1));
    let (ns, nl) = new_range.map_or((0, 0), |(a, b)| (a, b - a + 1));
    let _ = writeln!(diff, "@@ -{os},{ol} +{ns},{nl} @@");
    let mut changed = Vec::new();
    for op in ops {
        match *op {
            EditOp::Equal { old: o, .. } => {
                let _ = writeln!(diff, " {}", old[o]);
            }
            EditOp::Delete { old: o } => {
                let _ = writeln!(diff, "-{}", old[o]);
                changed.push(ChangedLine {
                    kind: LineKind::Deleted,
                    old_no: Some(o + 1),
                    new_no: None,
                    text: old[o].clone(),
                });
            }
            EditOp::Insert { new: n } => {
                let _ = writeln!(diff, "+{}", new[n]);
                changed.push(ChangedLine {
                    kind: LineKind::Added,
                    old_no: None,
                    new_no: Some(n + 1),
                    text: new[n].clone(),
                });
            }
        }
    }
    Region {
        kind,
        name,
        old_text: old_range.map_or_else(String::new, |(a, b)| number_lines(old, a, b)),
        new_text: new_range.map_or_else(String::new, |(a, b)| number_lines(new, a, b)),
        old_range,
        new_range,
        rendered_diff: diff,
        changed,
    }
}

fn line_prefix() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*\d+\s*:\s?").unwrap())
}

/// Line numbers in `file` matching statements reported as text, compared
/// with all whitespace removed. A leading `lineno:` prefix or diff marker is
/// ignored. Multi-line statements match line by line, skipping lines
/// without any alphanumeric character. Returns the matched lines and the
/// statements that matched nothing.
pub fn resolve_statements<S: AsRef<str>>(
    file: &FileVersion,
    statements: &[S],
) -> (BTreeSet<usize>, Vec<String>) {
    let index: Vec<String> = file.lines.iter().map(|l| strip_whitespace(l)).collect();
    let mut found = BTreeSet::new();
    let mut unmatched = Vec::new();
    for stmt in statements {
        let stmt = stmt.as_ref();
        let parts: Vec<&str> = stmt.lines().filter(|l| !l.trim().is_empty()).collect();
        let multi = parts.len() > 1;
        let mut hit = false;
        for part in parts {
            let part = line_prefix().replace(part, "");
            let key = strip_whitespace(&part);
            if multi && !key.chars().any(char::is_alphanumeric) {
                continue;
            }
            let mut matches = matching_lines(&index, &key);
            if matches.is_empty() {
                if let Some(rest) = key.strip_prefix(['+', '-']) {
                    matches = matching_lines(&index, rest);
                }
            }
            hit |= !matches.is_empty();
            found.extend(matches);
        }
        if !hit {
            unmatched.push(stmt.to_string());
        }
    }
    (found, unmatched)
}

fn matching_lines(index: &[String], key: &str) -> Vec<usize> {
    if key.is_empty() {
        return Vec::new();
    }
    index
        .iter()
        .enumerate()
        .filter(|(_, l)| l.as_str() == key)
        .map(|(i, _)| i + 1)
        .collect()
}
