use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Deserialize;

use super::{ChatRequest, StepTag};
use crate::error::LlmError;

/// Produces completions offline.
pub trait Responder: Send + Sync {
    fn respond(&self, req: &ChatRequest) -> String;
}

impl<F> Responder for F
where
    F: Fn(&ChatRequest) -> String + Send + Sync,
{
    fn respond(&self, req: &ChatRequest) -> String {
        self(req)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Script {
    One(String),
    Many(Vec<String>),
}

/// Canned answers per step tag, read from a JSON object such as
/// `{"summarize": "...", "verdict": ["first", "second"]}`. Lists are served
/// in order and the last entry repeats.
#[derive(Debug, Default)]
pub struct FileResponder {
    answers: BTreeMap<StepTag, Vec<String>>,
    served: BTreeMap<StepTag, AtomicUsize>,
}

impl FileResponder {
    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let raw: BTreeMap<String, Script> = serde_json::from_str(text)
            .map_err(|e| LlmError::InvalidRequest(format!("responder script: {e}")))?;
        let mut answers = BTreeMap::new();
        for (tag, script) in raw {
            let tag = StepTag::parse(&tag)
                .ok_or_else(|| LlmError::InvalidRequest(format!("unknown step tag {tag:?}")))?;
            let list = match script {
                Script::One(s) => vec![s],
                Script::Many(v) => v,
            };
            answers.insert(tag, list);
        }
        let served = answers.keys().map(|t| (*t, AtomicUsize::new(0))).collect();
        Ok(FileResponder { answers, served })
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Responder for FileResponder {
    fn respond(&self, req: &ChatRequest) -> String {
        let Some(list) = self.answers.get(&req.tag).filter(|l| !l.is_empty()) else {
            return String::new();
        };
        let i = self.served[&req.tag].fetch_add(1, Ordering::Relaxed);
        list[i.min(list.len() - 1)].clone()
    }
}
