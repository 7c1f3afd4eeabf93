//! Classic SZZ variants (B-SZZ, AG-SZZ, MA-SZZ) and the single-commit
//! selectors used by R-SZZ and L-SZZ.

use std::cmp::Reverse;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diff::{classify_noise, cosmetic_deletions, Language, LineKind, NoiseClass};
use crate::error::RepoError;
use crate::repo::{CommitId, LineOrigin, Repo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribution {
    pub traced_lines: usize,
    pub committer_time: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub fix: CommitId,
    pub candidates: BTreeMap<CommitId, Attribution>,
}

impl CandidateSet {
    pub fn empty(fix: CommitId) -> Self {
        CandidateSet {
            fix,
            candidates: BTreeMap::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn contains(&self, id: &CommitId) -> bool {
        self.candidates.contains_key(id)
    }

    /// Records one traced line attributed to `commit`.
    pub fn attribute(&mut self, commit: CommitId, committer_time: i64) {
        self.candidates
            .entry(commit)
            .or_insert(Attribution {
                traced_lines: 0,
                committer_time,
            })
            .traced_lines += 1;
    }

    /// Candidates ordered by committer time, newest first; ties by id, larger
    /// first.
    pub fn by_date_desc(&self) -> Vec<(CommitId, i64)> {
        let mut v: Vec<(CommitId, i64)> = self
            .candidates
            .iter()
            .map(|(id, a)| (id.clone(), a.committer_time))
            .collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| b.0.cmp(&a.0)));
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// R-SZZ: most recent committer time.
    Latest,
    /// L-SZZ: most deleted lines of the fix attributed to the candidate.
    Largest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    Basic,
    NoiseFiltered,
    MetaAware,
}

pub fn b_szz(repo: &Repo, fix: &CommitId) -> Result<CandidateSet, RepoError> {
    run_variant(repo, fix, Variant::Basic)
}

/// B-SZZ without deleted noise lines (see [`crate::diff::classify_noise`]).
pub fn ag_szz(repo: &Repo, fix: &CommitId) -> Result<CandidateSet, RepoError> {
    run_variant(repo, fix, Variant::NoiseFiltered)
}

/// AG-SZZ whose origins skip meta-changes (merges and commits that leave
/// the traced file untouched).
pub fn ma_szz(repo: &Repo, fix: &CommitId) -> Result<CandidateSet, RepoError> {
    run_variant(repo, fix, Variant::MetaAware)
}

fn run_variant(repo: &Repo, fix: &CommitId, variant: Variant) -> Result<CandidateSet, RepoError> {
    let meta = repo.meta(fix)?;
    let mut set = CandidateSet::empty(fix.clone());
    let Some(parent) = meta.first_parent().cloned() else {
        return Ok(set);
    };
    for patch in repo.commit_patches(fix, 0)? {
        let Some(old_path) = patch.old_path.as_deref() else {
            continue;
        };
        if patch.is_binary {
            continue;
        }
        let language = Language::from_path(old_path).unwrap_or(Language::C);
        for hunk in &patch.hunks {
            let cosmetic = cosmetic_deletions(hunk);
            for line in hunk.changed().filter(|c| c.kind == LineKind::Deleted) {
                let old_no = line.old_no.expect("deleted lines carry an old number");
                if variant != Variant::Basic
                    && (classify_noise(&line.text, language) != NoiseClass::Code
                        || cosmetic.contains(&old_no))
                {
                    continue;
                }
                let mut origin = repo.trace_line(&parent, old_path, old_no)?;
                if variant == Variant::MetaAware {
                    origin = skip_meta_changes(repo, origin)?;
                }
                let time = repo.meta(&origin.commit)?.committer_time;
                set.attribute(origin.commit, time);
            }
        }
    }
    Ok(set)
}

const META_STEP_LIMIT: usize = 100_000;

fn skip_meta_changes(repo: &Repo, mut origin: LineOrigin) -> Result<LineOrigin, RepoError> {
    for _ in 0..META_STEP_LIMIT {
        let meta = repo.meta(&origin.commit)?;
        if meta.parents.is_empty() {
            return Ok(origin);
        }
        if meta.is_merge {
            let mut next = None;
            for parent in &meta.parents {
                let Some(parent_path) = repo.path_in_parent(&origin.commit, parent, &origin.path)? else {
                    continue;
                };
                let Some(map) = repo.line_map(parent, &parent_path, &origin.commit, &origin.path)? else {
                    continue;
                };
                if let Some(old) = map.old_of(origin.line_no) {
                    next = Some(repo.trace_from(parent.clone(), parent_path, old)?);
                    break;
                }
            }
            match next {
                Some(n) => {
                    origin = n;
                    continue;
                }
                // Content written by the merge itself.
                None => return Ok(origin),
            }
        }
        if repo.unchanged_vs_first_parent(&origin.commit, &origin.path)? {
            let parent = meta.parents[0].clone();
            let parent_path = repo
                .path_in_parent(&origin.commit, &parent, &origin.path)?
                .unwrap_or_else(|| origin.path.clone());
            origin = repo.trace_from(parent, parent_path, origin.line_no)?;
            continue;
        }
        return Ok(origin);
    }
    Err(RepoError::NonTerminatingTrace(origin.commit.to_string()))
}

/// Picks one commit from a candidate set; `None` when it is empty.
///
/// Ties: `Latest` prefers the higher committer time, then the smallest id.
/// `Largest` prefers more traced lines, then the later commit, then the
/// smallest id.
pub fn select_single(cands: &CandidateSet, strategy: Strategy) -> Option<CommitId> {
    let iter = cands.candidates.iter();
    match strategy {
        Strategy::Latest => iter
            .max_by_key(|(id, a)| (a.committer_time, Reverse(*id)))
            .map(|(id, _)| id.clone()),
        Strategy::Largest => iter
            .max_by_key(|(id, a)| (a.traced_lines, a.committer_time, Reverse(*id)))
            .map(|(id, _)| id.clone()),
    }
}
