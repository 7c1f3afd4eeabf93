//! The LLM-assisted identification pipeline.
//!
//! A run first prepares a root-cause analysis and a hint of buggy
//! statements over the expanded context. The ability check then asks whether
//! the model can tell the buggy and fixed versions apart. If it can,
//! candidates are adjudicated one by one; otherwise (or when adjudication
//! finds nothing) statements are ranked and the most recent origin of the
//! top ones is designated.

mod assess;
mod identify;
mod prepare;
pub mod prompts;
mod session;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::PipelineError;
use crate::llm::{Gateway, UsageSummary};
use crate::repo::{CommitId, Repo};
use crate::szz::CandidateSet;

pub use assess::{ability_check, generate_hint, Hint, Statement, MAX_CONTEXT_CHARS};
pub use identify::{
    context_enhanced_identify, rank_based_identify, CandidateEntry, ContextEnhancedOutcome,
    RankOutcome, Verdict, VerdictValue,
};
pub use prepare::{names_path, prepare, RootCauseAnalysis};
pub use session::Session;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    ContextEnhanced,
    RankBased,
    Empty,
    /// Produced by a classic SZZ variant.
    Classic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub fix: CommitId,
    pub predicted: BTreeSet<CommitId>,
    pub route: Route,
    pub root_cause: Option<String>,
    pub candidates: Option<Vec<CandidateEntry>>,
    pub llm_calls: u64,
    pub tokens_total: u64,
    pub wall_ms: u64,
    pub diagnostics: Vec<String>,
}

impl Prediction {
    pub fn empty(fix: CommitId, diagnostics: Vec<String>) -> Self {
        Prediction {
            fix,
            predicted: BTreeSet::new(),
            route: Route::Empty,
            root_cause: None,
            candidates: None,
            llm_calls: 0,
            tokens_total: 0,
            wall_ms: 0,
            diagnostics,
        }
    }

    /// Wraps the output of a classic variant.
    pub fn classic(set: &CandidateSet, predicted: BTreeSet<CommitId>) -> Self {
        Prediction {
            fix: set.fix.clone(),
            predicted,
            route: Route::Classic,
            root_cause: None,
            candidates: Some(
                set.by_date_desc()
                    .into_iter()
                    .map(|(commit, committer_time)| CandidateEntry { commit, committer_time })
                    .collect(),
            ),
            llm_calls: 0,
            tokens_total: 0,
            wall_ms: 0,
            diagnostics: Vec::new(),
        }
    }

    pub fn usage(&self) -> UsageSummary {
        UsageSummary {
            llm_calls: self.llm_calls,
            tokens_total: self.tokens_total,
            wall_ms: self.wall_ms,
        }
    }
}

/// Runs the pipeline on one fix. Repository failures yield an empty
/// prediction with a diagnostic; gateway failures that make the run
/// meaningless (missing cassette, missing responder, failed preparation)
/// are returned as errors.
pub fn run(repo: &Repo, fix: &CommitId, config: &Config, gateway: &Gateway) -> Result<Prediction, PipelineError> {
    let mut session = Session::new(gateway, config);
    let outcome = run_in(&mut session, repo, fix);
    let usage = session.ledger.snapshot();
    let mut prediction = match outcome {
        Ok(p) => p,
        Err(PipelineError::Repo(e)) => {
            session.note(format!("repository error: {e}"));
            Prediction::empty(fix.clone(), Vec::new())
        }
        Err(e) => return Err(e),
    };
    prediction.llm_calls = usage.llm_calls;
    prediction.tokens_total = usage.tokens_total;
    prediction.wall_ms = usage.wall_ms;
    prediction.diagnostics = std::mem::take(&mut session.diagnostics);
    Ok(prediction)
}

/// Pipeline body on an existing session; usage and diagnostics stay in the
/// session.
pub fn run_in(session: &mut Session, repo: &Repo, fix: &CommitId) -> Result<Prediction, PipelineError> {
    let analysis = prepare(session, repo, fix)?;
    let hint = generate_hint(session, repo, fix, &analysis)?;
    let mut prediction = Prediction::empty(fix.clone(), Vec::new());
    prediction.root_cause = Some(analysis.root_cause.clone());

    if hint.is_empty() {
        session.note("route: no resolvable buggy statement, using rank-based identification");
    } else if ability_check(session, repo, fix, &analysis, &hint)? {
        let ce = context_enhanced_identify(session, repo, fix, &analysis, &hint)?;
        if let Some(found) = ce.found {
            prediction.predicted.insert(found);
            prediction.route = Route::ContextEnhanced;
            prediction.candidates = Some(ce.candidates);
            return Ok(prediction);
        }
        session.note("route: no candidate designated, falling back to rank-based identification");
    } else {
        session.note("route: ability check failed, using rank-based identification");
    }

    let top_n = session.config.pipeline.top_n;
    let rb = rank_based_identify(session, repo, fix, &analysis, top_n)?;
    prediction.route = if rb.predicted.is_empty() {
        Route::Empty
    } else {
        Route::RankBased
    };
    prediction.predicted = rb.predicted;
    prediction.candidates = Some(rb.candidates);
    Ok(prediction)
}
