use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::session::Session;
use crate::diff::render_unified;
use crate::error::PipelineError;
use crate::llm::StepTag;
use crate::repo::{CommitId, Repo};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootCauseAnalysis {
    pub modification_summary: String,
    pub root_cause: String,
    /// Paths after the fix (the old path for deleted files).
    pub relevant_files: BTreeSet<String>,
}

#[derive(Deserialize)]
struct SummaryAnswer {
    summary: String,
}

#[derive(Deserialize)]
struct RootCauseAnswer {
    root_cause: String,
    #[serde(default)]
    files: Vec<String>,
}

fn normalize(name: &str) -> &str {
    let n = name.trim().trim_matches('`');
    n.strip_prefix("a/")
        .or_else(|| n.strip_prefix("b/"))
        .or_else(|| n.strip_prefix("./"))
        .unwrap_or(n)
}

/// Whether a file named by the model refers to `path`: equal, or one is a
/// `/`-separated suffix of the other.
pub fn names_path(named: &str, path: &str) -> bool {
    let named = normalize(named);
    !named.is_empty()
        && (named == path
            || path.ends_with(&format!("/{named}"))
            || named.ends_with(&format!("/{path}")))
}

/// Summarizes the fix once, then asks for the root cause and related files
/// over `prepare_runs` shuffled renderings of the patch. Related files are
/// the union over runs; the root cause comes from the first run that
/// answered.
pub fn prepare(
    session: &mut Session,
    repo: &Repo,
    fix: &CommitId,
) -> Result<RootCauseAnalysis, PipelineError> {
    let meta = repo.meta(fix)?;
    let patches = repo.commit_patches(fix, 3)?;
    let changed: Vec<String> = patches.iter().map(|p| p.path().to_string()).collect();

    let full = render_unified(&patches);
    let summary = session
        .ask::<SummaryAnswer>(StepTag::Summarize, &[("message", &meta.message), ("patch", &full)])
        .map_err(PipelineError::LlmUnavailable)?
        .map(|a| a.summary)
        .unwrap_or_default();

    let mut relevant = BTreeSet::new();
    let mut root_cause: Option<String> = None;
    for run in 0..session.config.pipeline.prepare_runs {
        let mut order = patches.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(session.seed_for(fix, "shuffle", run as u64));
        order.shuffle(&mut rng);
        let shuffled = render_unified(&order);
        let answer = session
            .ask::<RootCauseAnswer>(
                StepTag::RootCause,
                &[("message", &meta.message), ("summary", &summary), ("patch", &shuffled)],
            )
            .map_err(PipelineError::LlmUnavailable)?;
        let Some(answer) = answer else {
            session.note(format!("prepare run {}: no usable answer", run + 1));
            continue;
        };
        for named in &answer.files {
            relevant.extend(changed.iter().filter(|p| names_path(named, p)).cloned());
        }
        root_cause.get_or_insert(answer.root_cause);
    }
    if relevant.is_empty() {
        session.note("prepare: no changed file named, using all changed files");
        relevant = changed.into_iter().collect();
    }
    session.note(format!(
        "prepare: relevant files {:?}",
        relevant.iter().collect::<Vec<_>>()
    ));
    Ok(RootCauseAnalysis {
        modification_summary: summary,
        root_cause: root_cause.unwrap_or_default(),
        relevant_files: relevant,
    })
}
