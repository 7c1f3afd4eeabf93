//! Chat-completion gateway with record/replay cassettes and a retrying
//! HTTP transport.

mod cassette;
mod http;
mod scripted;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::LlmError;

pub use cassette::{CassetteEntry, CassetteStore};
pub use http::HttpTransport;
pub use scripted::{FileResponder, Responder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepTag {
    Summarize,
    RootCause,
    Hint,
    Ability,
    Containment,
    Verdict,
    Rank,
    Statements,
}

impl StepTag {
    pub const ALL: [StepTag; 8] = [
        StepTag::Summarize,
        StepTag::RootCause,
        StepTag::Hint,
        StepTag::Ability,
        StepTag::Containment,
        StepTag::Verdict,
        StepTag::Rank,
        StepTag::Statements,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StepTag::Summarize => "summarize",
            StepTag::RootCause => "root_cause",
            StepTag::Hint => "hint",
            StepTag::Ability => "ability",
            StepTag::Containment => "containment",
            StepTag::Verdict => "verdict",
            StepTag::Rank => "rank",
            StepTag::Statements => "statements",
        }
    }

    pub fn parse(s: &str) -> Option<StepTag> {
        StepTag::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for StepTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub tag: StepTag,
}

impl ChatRequest {
    pub fn new(tag: StepTag, system: impl Into<String>, user: impl Into<String>) -> Self {
        ChatRequest {
            system: system.into(),
            user: user.into(),
            temperature: 0.0,
            max_output_tokens: 1024,
            tag,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 over tag, system and user text.
    pub fn cassette_key(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.tag.as_str().as_bytes());
        h.update([0]);
        h.update(self.system.as_bytes());
        h.update([0]);
        h.update(self.user.as_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub latency_ms: u64,
    pub from_cache: bool,
}

/// Per-fix usage counters. Safe to share between threads.
#[derive(Debug, Default)]
pub struct UsageLedger {
    calls: AtomicU64,
    tokens: AtomicU64,
    wall_ms: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageSummary {
    pub llm_calls: u64,
    pub tokens_total: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageReport {
    pub fixes: usize,
    pub total: UsageSummary,
    pub avg_llm_calls: f64,
    pub avg_tokens: f64,
    pub avg_wall_ms: f64,
}

impl UsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, resp: &ChatResponse) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.tokens
            .fetch_add(resp.tokens_in + resp.tokens_out, Ordering::Relaxed);
        self.wall_ms.fetch_add(resp.latency_ms, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> UsageSummary {
        UsageSummary {
            llm_calls: self.calls.load(Ordering::Relaxed),
            tokens_total: self.tokens.load(Ordering::Relaxed),
            wall_ms: self.wall_ms.load(Ordering::Relaxed),
        }
    }
}

pub fn usage_summary(ledger: &UsageLedger) -> UsageSummary {
    ledger.snapshot()
}

/// Totals and per-fix averages over several fixes.
pub fn aggregate_usage(per_fix: &[UsageSummary]) -> UsageReport {
    let mut total = UsageSummary::default();
    for u in per_fix {
        total.llm_calls += u.llm_calls;
        total.tokens_total += u.tokens_total;
        total.wall_ms += u.wall_ms;
    }
    let n = per_fix.len();
    let avg = |x: u64| if n == 0 { 0.0 } else { x as f64 / n as f64 };
    UsageReport {
        fixes: n,
        total,
        avg_llm_calls: avg(total.llm_calls),
        avg_tokens: avg(total.tokens_total),
        avg_wall_ms: avg(total.wall_ms),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    #[default]
    Replay,
    Scripted,
}

/// Failure of one upstream attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError {
    pub message: String,
    /// Network failures, timeouts, 429 and 5xx responses.
    pub retryable: bool,
}

pub trait Transport: Send + Sync {
    fn send(&self, req: &ChatRequest) -> Result<ChatResponse, TransportError>;
}

pub const MAX_ATTEMPTS: u32 = 3;

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Dispatches requests according to the configured [`Mode`].
pub struct Gateway {
    mode: Mode,
    transport: Option<Arc<dyn Transport>>,
    responder: Option<Arc<dyn Responder>>,
    cassettes: Option<CassetteStore>,
    sleeper: Sleeper,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("transport", &self.transport.is_some())
            .field("responder", &self.responder.is_some())
            .field("cassettes", &self.cassettes)
            .finish()
    }
}

impl Gateway {
    pub fn new(mode: Mode) -> Self {
        Gateway {
            mode,
            transport: None,
            responder: None,
            cassettes: None,
            sleeper: Arc::new(std::thread::sleep),
        }
    }

    pub fn scripted(responder: impl Responder + 'static) -> Self {
        Gateway::new(Mode::Scripted).with_responder(responder)
    }

    pub fn replay(store: CassetteStore) -> Self {
        Gateway::new(Mode::Replay).with_cassettes(store)
    }

    pub fn with_transport(mut self, t: impl Transport + 'static) -> Self {
        self.transport = Some(Arc::new(t));
        self
    }

    pub fn with_responder(mut self, r: impl Responder + 'static) -> Self {
        self.responder = Some(Arc::new(r));
        self
    }

    pub fn with_shared_responder(mut self, r: Arc<dyn Responder>) -> Self {
        self.responder = Some(r);
        self
    }

    pub fn with_cassettes(mut self, store: CassetteStore) -> Self {
        self.cassettes = Some(store);
        self
    }

    pub fn with_sleeper(mut self, f: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Arc::new(f);
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        match self.mode {
            Mode::Replay => {
                let store = self.store()?;
                let key = req.cassette_key();
                let entry = store.load(&key)?.ok_or(LlmError::CassetteMiss(key))?;
                Ok(ChatResponse {
                    from_cache: true,
                    ..entry.response
                })
            }
            Mode::Scripted => self.scripted_response(req),
            Mode::Live => self.live(req),
            Mode::Record => {
                let store = self.store()?;
                let resp = if self.transport.is_some() {
                    self.live(req)?
                } else {
                    self.scripted_response(req)?
                };
                store.save(&CassetteEntry::new(req, &resp))?;
                Ok(resp)
            }
        }
    }

    fn store(&self) -> Result<&CassetteStore, LlmError> {
        self.cassettes
            .as_ref()
            .ok_or_else(|| LlmError::InvalidRequest(format!("{:?} mode needs a cassette directory", self.mode)))
    }

    fn scripted_response(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let responder = self.responder.as_ref().ok_or(LlmError::ResponderUnset)?;
        let text = responder.respond(req);
        Ok(ChatResponse {
            tokens_in: estimate_tokens(&req.system) + estimate_tokens(&req.user),
            tokens_out: estimate_tokens(&text),
            text,
            latency_ms: 0,
            from_cache: false,
        })
    }

    fn live(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let transport = self
            .transport
            .as_ref()
            .ok_or_else(|| LlmError::ProviderError("no transport configured".into()))?;
        let mut last = String::new();
        for attempt in 0..MAX_ATTEMPTS {
            if attempt > 0 {
                (self.sleeper)(Duration::from_secs(1 << (attempt - 1)));
            }
            let started = Instant::now();
            match transport.send(req) {
                Ok(mut resp) => {
                    if resp.latency_ms == 0 {
                        resp.latency_ms = started.elapsed().as_millis() as u64;
                    }
                    resp.from_cache = false;
                    return Ok(resp);
                }
                Err(e) if e.retryable => {
                    log::warn!("attempt {} for {} failed: {}", attempt + 1, req.tag, e.message);
                    last = e.message;
                }
                Err(e) => return Err(LlmError::ProviderError(e.message)),
            }
        }
        Err(LlmError::ProviderError(format!(
            "giving up after {MAX_ATTEMPTS} attempts: {last}"
        )))
    }
}

/// Rough token count for offline modes: one token per four characters.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Flaky {
        fail: Mutex<Vec<TransportError>>,
        calls: AtomicU64,
    }

    impl Transport for Flaky {
        fn send(&self, _req: &ChatRequest) -> Result<ChatResponse, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.fail.lock().unwrap().pop() {
                Some(e) => Err(e),
                None => Ok(ChatResponse {
                    text: "ok".into(),
                    tokens_in: 1,
                    tokens_out: 1,
                    latency_ms: 5,
                    from_cache: false,
                }),
            }
        }
    }

    fn err(retryable: bool) -> TransportError {
        TransportError {
            message: "boom".into(),
            retryable,
        }
    }

    fn gateway(fails: Vec<TransportError>) -> (Gateway, Arc<Mutex<Vec<Duration>>>, Arc<Flaky>) {
        let waits = Arc::new(Mutex::new(Vec::new()));
        let w = waits.clone();
        let flaky = Arc::new(Flaky {
            fail: Mutex::new(fails),
            calls: AtomicU64::new(0),
        });
        let mut g = Gateway::new(Mode::Live).with_sleeper(move |d| w.lock().unwrap().push(d));
        g.transport = Some(flaky.clone());
        (g, waits, flaky)
    }

    #[test]
    fn retries_with_backoff_then_succeeds() {
        let (g, waits, flaky) = gateway(vec![err(true), err(true)]);
        let r = g.complete(&ChatRequest::new(StepTag::Hint, "s", "u")).unwrap();
        assert_eq!(r.text, "ok");
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);
        assert_eq!(*waits.lock().unwrap(), vec![Duration::from_secs(1), Duration::from_secs(2)]);
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let (g, _, flaky) = gateway(vec![err(true), err(true), err(true), err(true)]);
        let e = g.complete(&ChatRequest::new(StepTag::Hint, "s", "u")).unwrap_err();
        assert!(matches!(e, LlmError::ProviderError(_)));
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (g, waits, flaky) = gateway(vec![err(false)]);
        assert!(g.complete(&ChatRequest::new(StepTag::Hint, "s", "u")).is_err());
        assert_eq!(flaky.calls.load(Ordering::SeqCst), 1);
        assert!(waits.lock().unwrap().is_empty());
    }

    #[test]
    fn request_validation_and_key() {
        let mut r = ChatRequest::new(StepTag::Rank, "s", "u");
        assert_eq!(r.cassette_key(), ChatRequest::new(StepTag::Rank, "s", "u").cassette_key());
        assert_ne!(r.cassette_key(), ChatRequest::new(StepTag::Hint, "s", "u").cassette_key());
        // Temperature does not participate in the key.
        r.temperature = 1.5;
        assert_eq!(r.cassette_key(), ChatRequest::new(StepTag::Rank, "s", "u").cassette_key());
        r.temperature = 2.5;
        assert!(matches!(r.validate(), Err(LlmError::InvalidRequest(_))));
    }

    #[test]
    fn usage_accounting() {
        let ledger = UsageLedger::new();
        assert_eq!(usage_summary(&ledger), UsageSummary::default());
        for _ in 0..3 {
            ledger.record(&ChatResponse {
                text: String::new(),
                tokens_in: 100,
                tokens_out: 200,
                latency_ms: 7,
                from_cache: false,
            });
        }
        let s = usage_summary(&ledger);
        assert_eq!((s.llm_calls, s.tokens_total, s.wall_ms), (3, 900, 21));
        let report = aggregate_usage(&[s, UsageSummary::default()]);
        assert_eq!(report.total.llm_calls, 3);
        assert_eq!(report.avg_llm_calls, 1.5);
        assert_eq!(aggregate_usage(&[]).avg_tokens, 0.0);
    }

    #[test]
    fn scripted_without_responder() {
        let g = Gateway::new(Mode::Scripted);
        assert!(matches!(
            g.complete(&ChatRequest::new(StepTag::Hint, "s", "u")),
            Err(LlmError::ResponderUnset)
        ));
    }
}
