use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::assess::{change_of, label, render_slices, versions, Hint, StatementAnswer};
use super::prepare::RootCauseAnalysis;
use super::session::Session;
use crate::context::{refine_versions, resolve_statements};
use crate::diff::render_unified;
use crate::error::PipelineError;
use crate::llm::StepTag;
use crate::repo::{CommitId, Repo};
use crate::szz::{select_single, CandidateSet, Strategy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub commit: CommitId,
    pub committer_time: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictValue {
    Buggy,
    Clean,
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub value: VerdictValue,
    pub rationale: String,
}

/// Origin lines of traced statements, grouped by commit and path.
type Origins = BTreeMap<CommitId, BTreeMap<String, BTreeSet<usize>>>;

/// Traces `(path, line)` pairs of the fix's first parent to their origins.
fn trace_all(
    repo: &Repo,
    fix: &CommitId,
    lines: &BTreeMap<String, BTreeSet<usize>>,
) -> Result<(Origins, CandidateSet), PipelineError> {
    let mut origins: Origins = BTreeMap::new();
    let mut set = CandidateSet::empty(fix.clone());
    let Some(parent) = repo.meta(fix)?.first_parent().cloned() else {
        return Ok((origins, set));
    };
    for (path, ls) in lines {
        for &l in ls {
            let o = repo.trace_line(&parent, path, l)?;
            let time = repo.meta(&o.commit)?.committer_time;
            set.attribute(o.commit.clone(), time);
            origins.entry(o.commit).or_default().entry(o.path).or_default().insert(o.line_no);
        }
    }
    Ok((origins, set))
}

fn candidate_list(set: &CandidateSet) -> Vec<CandidateEntry> {
    set.by_date_desc()
        .into_iter()
        .map(|(commit, committer_time)| CandidateEntry { commit, committer_time })
        .collect()
}

#[derive(Deserialize)]
struct ContainmentAnswer {
    contains: String,
}

#[derive(Deserialize)]
struct VerdictAnswer {
    verdict: String,
    #[serde(default)]
    reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextEnhancedOutcome {
    pub found: Option<CommitId>,
    pub candidates: Vec<CandidateEntry>,
}

/// Two-step judgement of one version: containment, then a verdict.
/// Returns `Some(true)` for buggy, `Some(false)` for clean and `None` when
/// undeterminable.
fn judge(
    session: &mut Session,
    analysis: &RootCauseAnalysis,
    hint: &Hint,
    context: &str,
    who: &str,
) -> Result<Option<bool>, PipelineError> {
    let contains: Option<ContainmentAnswer> = session.ask_soft(
        StepTag::Containment,
        &[("buggy_statements", &hint.render_buggy()), ("context", context)],
    )?;
    match contains.and_then(|c| label(&c.contains)) {
        Some(false) => {
            session.note(format!("identify: {who} does not contain the buggy statements"));
            return Ok(Some(false));
        }
        None => {
            session.note(format!("identify: {who} containment undeterminable"));
            return Ok(None);
        }
        Some(true) => {}
    }
    let verdict = judge_verdict(session, analysis, hint, context)?;
    session.note(format!("identify: {who} verdict {:?}", verdict.value));
    Ok(match verdict.value {
        VerdictValue::Buggy => Some(true),
        VerdictValue::Clean => Some(false),
        VerdictValue::Unparseable => None,
    })
}

fn judge_verdict(
    session: &mut Session,
    analysis: &RootCauseAnalysis,
    hint: &Hint,
    context: &str,
) -> Result<Verdict, PipelineError> {
    let answer: Option<VerdictAnswer> = session.ask_soft(
        StepTag::Verdict,
        &[
            ("root_cause", &analysis.root_cause),
            ("buggy_statements", &hint.render_buggy()),
            ("fixing_statements", &hint.render_fixing()),
            ("context", context),
        ],
    )?;
    Ok(match answer {
        Some(a) => Verdict {
            value: match label(&a.verdict) {
                Some(true) => VerdictValue::Buggy,
                Some(false) => VerdictValue::Clean,
                None => VerdictValue::Unparseable,
            },
            rationale: a.reason,
        },
        None => Verdict {
            value: VerdictValue::Unparseable,
            rationale: String::new(),
        },
    })
}

/// Scans candidates newest first and returns the first one judged buggy
/// whose parent is judged clean. An absent parent file counts as clean.
pub fn context_enhanced_identify(
    session: &mut Session,
    repo: &Repo,
    fix: &CommitId,
    analysis: &RootCauseAnalysis,
    hint: &Hint,
) -> Result<ContextEnhancedOutcome, PipelineError> {
    let (origins, set) = trace_all(repo, fix, &hint.buggy_lines())?;
    let candidates = candidate_list(&set);
    let cap = session.config.pipeline.candidate_cap;
    session.note(format!(
        "identify: {} candidates {:?}",
        candidates.len(),
        candidates.iter().map(|c| c.commit.short()).collect::<Vec<_>>()
    ));
    if candidates.len() > cap {
        session.note(format!("identify: more than {cap} candidates, skipping the scan"));
        return Ok(ContextEnhancedOutcome { found: None, candidates });
    }
    let margin = session.config.pipeline.initial_margin;
    for cand in &candidates {
        let meta = repo.meta(&cand.commit)?;
        let mut own = Vec::new();
        let mut before = Vec::new();
        for (path, lines) in &origins[&cand.commit] {
            let Some(file) = repo.file_at(&cand.commit, path)? else {
                continue;
            };
            let parent_file = match meta.first_parent() {
                Some(p) => match repo.path_in_parent(&cand.commit, p, path)? {
                    Some(pp) => repo.file_at(p, &pp)?,
                    None => None,
                },
                None => None,
            };
            let (a, b) = refine_versions(&file, parent_file.as_ref(), lines, margin);
            own.push((path.clone(), a.text));
            if let Some(b) = b {
                before.push((b.path.clone(), b.text));
            }
        }
        let short = cand.commit.short().to_string();
        if judge(session, analysis, hint, &render_slices(&own), &short)? != Some(true) {
            continue;
        }
        let parent_clean = if before.is_empty() {
            session.note(format!("identify: {short}^1 context is empty, clean"));
            true
        } else {
            judge(session, analysis, hint, &render_slices(&before), &format!("{short}^1"))? == Some(false)
        };
        if parent_clean {
            session.note(format!("identify: designated {short}"));
            return Ok(ContextEnhancedOutcome {
                found: Some(cand.commit.clone()),
                candidates,
            });
        }
    }
    Ok(ContextEnhancedOutcome { found: None, candidates })
}

#[derive(Deserialize)]
struct StatementsAnswer {
    #[serde(default)]
    statements: Vec<StatementAnswer>,
}

#[derive(Deserialize)]
struct RankAnswer {
    ranking: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankOutcome {
    pub predicted: BTreeSet<CommitId>,
    pub candidates: Vec<CandidateEntry>,
}

struct Ranked {
    path: String,
    text: String,
    lines: BTreeSet<usize>,
}

/// Fallback route: statements from the raw patch, one listwise ranking,
/// the top `top_n` statements per file traced, the most recent origin
/// designated.
pub fn rank_based_identify(
    session: &mut Session,
    repo: &Repo,
    fix: &CommitId,
    analysis: &RootCauseAnalysis,
    top_n: usize,
) -> Result<RankOutcome, PipelineError> {
    let message = repo.meta(fix)?.message;
    let patches = repo.commit_patches(fix, 3)?;
    let mut items: Vec<Ranked> = Vec::new();
    for path in &analysis.relevant_files {
        let Some(change) = change_of(repo, fix, path)? else {
            continue;
        };
        let (Some(old), _) = versions(repo, fix, &change)? else {
            continue;
        };
        let Some(patch) = patches.iter().find(|p| p.path() == path) else {
            continue;
        };
        let raw = render_unified(std::slice::from_ref(patch));
        let answer: Option<StatementsAnswer> = session.ask_soft(
            StepTag::Statements,
            &[
                ("root_cause", &analysis.root_cause),
                ("message", &message),
                ("file", path),
                ("patch", &raw),
            ],
        )?;
        for (text, _) in answer.into_iter().flat_map(|a| a.statements).map(StatementAnswer::into_parts) {
            let (lines, _) = resolve_statements(&old, std::slice::from_ref(&text));
            if lines.is_empty() {
                session.note(format!("rank: dropped unresolvable statement {:?}", text.trim()));
                continue;
            }
            if !items.iter().any(|i| i.path == old.path && i.text == text) {
                items.push(Ranked { path: old.path.clone(), text, lines });
            }
        }
    }
    let order = if items.len() < 2 {
        (0..items.len()).collect()
    } else {
        let listing: String = items
            .iter()
            .enumerate()
            .map(|(i, s)| format!("[{i}] {}: {}\n", s.path, s.text.trim()))
            .collect();
        let answer: Option<RankAnswer> = session.ask_soft(
            StepTag::Rank,
            &[("root_cause", &analysis.root_cause), ("statements", &listing)],
        )?;
        complete_ranking(answer.map(|a| a.ranking).unwrap_or_default(), items.len())
    };

    let mut chosen: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    let mut taken: BTreeMap<&str, usize> = BTreeMap::new();
    for i in order {
        let item = &items[i];
        let n = taken.entry(item.path.as_str()).or_default();
        if *n < top_n {
            *n += 1;
            chosen.entry(item.path.clone()).or_default().extend(&item.lines);
        }
    }
    let (_, set) = trace_all(repo, fix, &chosen)?;
    let predicted: BTreeSet<CommitId> = select_single(&set, Strategy::Latest).into_iter().collect();
    session.note(format!(
        "rank: {} statements, {} traced candidates",
        items.len(),
        set.len()
    ));
    Ok(RankOutcome {
        predicted,
        candidates: candidate_list(&set),
    })
}

/// Valid, first-seen indices of `ranking`, followed by any omitted indices
/// in their original order.
fn complete_ranking(ranking: Vec<usize>, n: usize) -> Vec<usize> {
    let mut seen = vec![false; n];
    let mut out = Vec::with_capacity(n);
    for i in ranking.into_iter().chain(0..n) {
        if i < n && !seen[i] {
            seen[i] = true;
            out.push(i);
        }
    }
    out
}
