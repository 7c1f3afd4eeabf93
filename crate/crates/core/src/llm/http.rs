use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{ChatRequest, ChatResponse, Transport, TransportError};

/// OpenAI-compatible chat-completions endpoint.
#[derive(Debug)]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: &str, model: &str, api_key: Option<String>) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| TransportError {
                message: e.to_string(),
                retryable: false,
            })?;
        Ok(HttpTransport {
            client,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let body = json!({
            "model": self.model,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
        });
        let started = Instant::now();
        let mut call = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| TransportError {
            message: e.to_string(),
            retryable: true,
        })?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(TransportError {
                message: format!("HTTP {status}: {}", text.chars().take(500).collect::<String>()),
                retryable: status.is_server_error() || status.as_u16() == 429,
            });
        }
        let v: Value = resp.json().map_err(|e| TransportError {
            message: format!("response body: {e}"),
            retryable: true,
        })?;
        parse_completion(&v, started.elapsed().as_millis() as u64)
    }
}

fn parse_completion(v: &Value, latency_ms: u64) -> Result<ChatResponse, TransportError> {
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| TransportError {
            message: "response has no choices[0].message.content".into(),
            retryable: false,
        })?;
    let count = |p: &str| v.pointer(p).and_then(Value::as_u64).unwrap_or(0);
    Ok(ChatResponse {
        text: text.to_string(),
        tokens_in: count("/usage/prompt_tokens"),
        tokens_out: count("/usage/completion_tokens"),
        latency_ms: latency_ms.max(1),
        from_cache: false,
    })
}
