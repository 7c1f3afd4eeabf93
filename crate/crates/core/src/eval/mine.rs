use std::collections::BTreeSet;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::RepoError;
use crate::repo::{CommitId, Repo};

static FIXES_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^\s*Fixes:\s*([0-9a-fA-F]{7,40})\b").expect("valid regex"));

// Whole words only, so "prefix" and "debugging" do not count. Common
// inflections ("fixed", "bugs", "introduced") do.
static KEYWORD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(fix(e[sd]|ing)?|bugs?|introduc(e[sd]?|ing))\b").expect("valid regex")
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MineMode {
    FixesTag,
    Keyword,
}

impl FromStr for MineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixes-tag" | "fixes_tag" => Ok(MineMode::FixesTag),
            "keyword" => Ok(MineMode::Keyword),
            _ => Err(format!("unknown mining mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinedFix {
    pub fix: CommitId,
    /// `None` for keyword candidates, which still need confirmation.
    pub inducing: Option<BTreeSet<CommitId>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MineOutcome {
    pub entries: Vec<MinedFix>,
    pub diagnostics: Vec<String>,
}

/// Ids named on `Fixes:` lines, in order of appearance.
pub fn fixes_tags(message: &str) -> Vec<&str> {
    FIXES_TAG.captures_iter(message).map(|c| c.get(1).unwrap().as_str()).collect()
}

pub fn has_fix_keyword(message: &str) -> bool {
    KEYWORD.is_match(message)
}

/// Scans the history reachable from HEAD, oldest first. `since` keeps
/// commits whose committer time is at or after it.
pub fn mine_fixes(repo: &Repo, mode: MineMode, since: Option<i64>) -> Result<MineOutcome, RepoError> {
    let mut out = MineOutcome::default();
    let mut history = repo.history()?;
    history.reverse();
    for meta in history {
        if since.is_some_and(|s| meta.committer_time < s) {
            continue;
        }
        match mode {
            MineMode::Keyword => {
                if has_fix_keyword(&meta.message) {
                    out.entries.push(MinedFix { fix: meta.id, inducing: None });
                }
            }
            MineMode::FixesTag => {
                let tags = fixes_tags(&meta.message);
                if tags.is_empty() {
                    continue;
                }
                let mut inducing = BTreeSet::new();
                for tag in tags {
                    match repo.resolve_commit(tag) {
                        Ok(m) if m.id != meta.id => {
                            inducing.insert(m.id);
                        }
                        Ok(_) => out.diagnostics.push(format!("{}: Fixes tag names the commit itself", meta.id.short())),
                        Err(e) => out
                            .diagnostics
                            .push(format!("{}: unresolvable inducing id {tag}: {e}", meta.id.short())),
                    }
                }
                if !inducing.is_empty() {
                    out.entries.push(MinedFix { fix: meta.id, inducing: Some(inducing) });
                }
            }
        }
    }
    Ok(out)
}
