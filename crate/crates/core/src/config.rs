//! Run configuration, loaded from a single JSON file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, LlmError};
use crate::llm::{CassetteStore, FileResponder, Gateway, HttpTransport, Mode};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub llm: LlmConfig,
    pub pipeline: PipelineConfig,
    pub paths: PathsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub mode: Mode,
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub cassette_dir: Option<PathBuf>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    /// Canned answers per step tag for scripted mode.
    pub script: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            mode: Mode::Replay,
            endpoint: None,
            model: "gpt-4o-mini".into(),
            temperature: 0.0,
            max_output_tokens: 1024,
            cassette_dir: None,
            api_key_env: None,
            script: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub prepare_runs: usize,
    pub window_lines: usize,
    pub initial_margin: usize,
    pub top_n: usize,
    pub candidate_cap: usize,
    pub workers: usize,
    /// Seeds file shuffling and version presentation order.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            prepare_runs: 3,
            window_lines: 3,
            initial_margin: 3,
            top_n: 1,
            candidate_cap: 16,
            workers: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub repos_dir: Option<PathBuf>,
}

impl Config {
    /// Reads `path`; relative paths inside are resolved against its
    /// directory.
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let mut cfg: Config = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.llm.cassette_dir,
            &mut cfg.llm.script,
            &mut cfg.paths.repos_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.pipeline.prepare_runs == 0 {
            return bad("pipeline.prepare_runs must be at least 1");
        }
        if self.pipeline.initial_margin == 0 {
            return bad("pipeline.initial_margin must be at least 1");
        }
        if self.pipeline.top_n == 0 {
            return bad("pipeline.top_n must be at least 1");
        }
        if self.pipeline.candidate_cap == 0 {
            return bad("pipeline.candidate_cap must be at least 1");
        }
        if !(0.0..=2.0).contains(&self.llm.temperature) {
            return bad("llm.temperature must lie in [0, 2]");
        }
        if self.llm.max_output_tokens == 0 {
            return bad("llm.max_output_tokens must be positive");
        }
        match self.llm.mode {
            Mode::Replay if self.llm.cassette_dir.is_none() => bad("replay mode needs llm.cassette_dir"),
            Mode::Record if self.llm.cassette_dir.is_none() => bad("record mode needs llm.cassette_dir"),
            Mode::Record if self.llm.endpoint.is_none() && self.llm.script.is_none() => {
                bad("record mode needs llm.endpoint or llm.script")
            }
            Mode::Live if self.llm.endpoint.is_none() => bad("live mode needs llm.endpoint"),
            _ => Ok(()),
        }
    }
}

impl LlmConfig {
    /// Builds the gateway described by this section. The API key is read
    /// from the environment at this point.
    pub fn gateway(&self) -> Result<Gateway, LlmError> {
        let mut g = Gateway::new(self.mode);
        if let Some(dir) = &self.cassette_dir {
            g = g.with_cassettes(CassetteStore::new(dir));
        }
        if let Some(script) = &self.script {
            g = g.with_responder(FileResponder::load(script)?);
        }
        if matches!(self.mode, Mode::Live | Mode::Record) {
            if let Some(endpoint) = &self.endpoint {
                let key = match &self.api_key_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        LlmError::InvalidRequest(format!("environment variable {var} is not set"))
                    })?),
                    None => None,
                };
                let t = HttpTransport::new(endpoint, &self.model, key)
                    .map_err(|e| LlmError::ProviderError(e.message))?;
                g = g.with_transport(t);
            }
        }
        Ok(g)
    }
}
