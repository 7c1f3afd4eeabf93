use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::number_lines;
use crate::diff::{build_line_map, LineMap};
use crate::error::RepoError;
use crate::repo::{CommitId, FileVersion, Repo};

/// Starting margin around the anchor lines.
pub const INITIAL_MARGIN: usize = 3;

/// Inclusive 1-based slice `[first_line, last_line]` of a file at `rev`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedContext {
    pub rev: CommitId,
    pub path: String,
    pub first_line: usize,
    pub last_line: usize,
    pub text: String,
}

impl RefinedContext {
    fn slice(file: &FileVersion, first: usize, last: usize) -> Self {
        RefinedContext {
            rev: file.rev.clone(),
            path: file.path.clone(),
            first_line: first,
            last_line: last,
            text: number_lines(&file.lines, first, last),
        }
    }

    fn whole(file: &FileVersion) -> Option<Self> {
        (!file.is_empty()).then(|| Self::slice(file, 1, file.len()))
    }
}

/// Slices `anchor` around `lines` and the corresponding part of `other`.
///
/// The margin starts at `margin` and grows until both boundary lines have a
/// counterpart in `other`. When `other` is absent only the anchor slice at
/// the starting margin is returned. When no margin works, both whole files
/// are returned. `lines` must be non-empty and within `anchor`.
pub fn refine_versions(
    anchor: &FileVersion,
    other: Option<&FileVersion>,
    lines: &BTreeSet<usize>,
    margin: usize,
) -> (RefinedContext, Option<RefinedContext>) {
    let (first, last) = (
        *lines.first().expect("non-empty anchor lines"),
        *lines.last().expect("non-empty anchor lines"),
    );
    assert!(first >= 1 && last <= anchor.len(), "anchor lines outside the file");
    let bounds = |n: usize| (first.saturating_sub(n).max(1), (last + n).min(anchor.len()));

    let Some(other) = other else {
        let (lo, hi) = bounds(margin);
        return (RefinedContext::slice(anchor, lo, hi), None);
    };
    let map: LineMap = build_line_map(anchor, other);
    let mut n = margin;
    loop {
        let (lo, hi) = bounds(n);
        if let (Some(lo2), Some(hi2)) = (map.new_of(lo), map.new_of(hi)) {
            return (
                RefinedContext::slice(anchor, lo, hi),
                Some(RefinedContext::slice(other, lo2, hi2)),
            );
        }
        if lo == 1 && hi == anchor.len() {
            return (
                RefinedContext::slice(anchor, 1, anchor.len()),
                RefinedContext::whole(other),
            );
        }
        n += 1;
    }
}

/// Refined slices of `path` at `rev_buggy` around `buggy_lines` and at
/// `rev_fixed`. The fixed slice is `None` when the file does not exist at
/// `rev_fixed`.
pub fn refine_context(
    repo: &Repo,
    rev_buggy: &CommitId,
    rev_fixed: &CommitId,
    path: &str,
    buggy_lines: &BTreeSet<usize>,
) -> Result<(RefinedContext, Option<RefinedContext>), RepoError> {
    let buggy = repo.file_at(rev_buggy, path)?.ok_or_else(|| RepoError::FileAbsent {
        rev: rev_buggy.to_string(),
        path: path.to_string(),
    })?;
    if buggy_lines.is_empty() {
        return Err(RepoError::LineOutOfRange {
            path: path.to_string(),
            line: 0,
            len: buggy.len(),
        });
    }
    if let Some(&bad) = buggy_lines.iter().find(|&&l| l == 0 || l > buggy.len()) {
        return Err(RepoError::LineOutOfRange {
            path: path.to_string(),
            line: bad,
            len: buggy.len(),
        });
    }
    let fixed = repo.file_at(rev_fixed, path)?;
    Ok(refine_versions(&buggy, fixed.as_ref(), buggy_lines, INITIAL_MARGIN))
}
