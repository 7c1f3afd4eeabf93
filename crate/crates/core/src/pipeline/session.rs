use serde::de::DeserializeOwned;
use sha2::{Digest, Sha256};

use super::prompts::{parse_answer, render, REFORMAT};
use crate::config::Config;
use crate::error::{LlmError, PipelineError};
use crate::llm::{ChatRequest, Gateway, StepTag, UsageLedger};
use crate::repo::CommitId;

/// State of one pipeline run: the gateway, usage counters and the
/// step-by-step trace.
pub struct Session<'a> {
    pub gateway: &'a Gateway,
    pub config: &'a Config,
    pub ledger: UsageLedger,
    pub diagnostics: Vec<String>,
    /// User prompts in call order, kept for inspection in tests.
    pub prompts: Vec<(StepTag, String)>,
}

impl<'a> Session<'a> {
    pub fn new(gateway: &'a Gateway, config: &'a Config) -> Self {
        Session {
            gateway,
            config,
            ledger: UsageLedger::new(),
            diagnostics: Vec::new(),
            prompts: Vec::new(),
        }
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::debug!("{msg}");
        self.diagnostics.push(msg);
    }

    fn call(&mut self, tag: StepTag, system: &str, user: String) -> Result<String, LlmError> {
        let mut req = ChatRequest::new(tag, system, user);
        req.temperature = self.config.llm.temperature;
        req.max_output_tokens = self.config.llm.max_output_tokens;
        self.prompts.push((tag, req.user.clone()));
        let resp = self.gateway.complete(&req)?;
        self.ledger.record(&resp);
        Ok(resp.text)
    }

    /// One templated call, with a single reformat retry when the answer does
    /// not parse. `Ok(None)` means both answers were unusable.
    pub fn ask<T: DeserializeOwned>(
        &mut self,
        tag: StepTag,
        vars: &[(&str, &str)],
    ) -> Result<Option<T>, LlmError> {
        let (system, user) = render(tag, vars);
        let first = self.call(tag, &system, user.clone())?;
        if let Some(v) = parse_answer(&first) {
            return Ok(Some(v));
        }
        self.note(format!("{tag}: unparseable answer, asking to reformat"));
        let retry = format!("{user}\n\n{REFORMAT}");
        let second = self.call(tag, &system, retry)?;
        let parsed = parse_answer(&second);
        if parsed.is_none() {
            self.note(format!("{tag}: answer still unparseable"));
        }
        Ok(parsed)
    }

    /// Like [`ask`](Self::ask), but non-fatal gateway failures become
    /// `Ok(None)` with a diagnostic.
    pub fn ask_soft<T: DeserializeOwned>(
        &mut self,
        tag: StepTag,
        vars: &[(&str, &str)],
    ) -> Result<Option<T>, PipelineError> {
        match self.ask(tag, vars) {
            Ok(v) => Ok(v),
            Err(e) if e.is_fatal() => Err(PipelineError::LlmUnavailable(e)),
            Err(e) => {
                self.note(format!("{tag}: gateway failure treated as no answer: {e}"));
                Ok(None)
            }
        }
    }

    /// Deterministic seed for one randomized decision.
    pub fn seed_for(&self, fix: &CommitId, purpose: &str, run: u64) -> u64 {
        let mut h = Sha256::new();
        h.update(self.config.pipeline.seed.to_le_bytes());
        h.update(fix.as_str().as_bytes());
        h.update(purpose.as_bytes());
        h.update(run.to_le_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("digest has 8 bytes"))
    }
}
