//! Network transport for chat-completion and embedding endpoints.

use std::time::Duration;

use serde_json::{json, Value};

use super::ChatRequest;

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    /// Worth retrying: rate limits, server errors, timeouts, dropped connections.
    Transient(String),
    /// Not worth retrying: authentication, bad requests, unexpected payloads.
    Fatal(String),
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Transient(m) => write!(f, "transient: {m}"),
            TransportError::Fatal(m) => write!(f, "fatal: {m}"),
        }
    }
}

pub trait Transport: Send + Sync {
    /// Returns the raw assistant message text.
    fn chat(&self, request: &ChatRequest) -> Result<String, TransportError>;

    /// Returns one vector per input text, in input order.
    fn embed(&self, model_id: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, TransportError>;
}

/// Client for endpoints speaking the common `/chat/completions` and
/// `/embeddings` JSON shape.
pub struct HttpTransport {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: &str) -> Self {
        HttpTransport {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: api_key.to_string(),
            agent: ureq::AgentBuilder::new().build(),
        }
    }

    fn post(&self, path: &str, body: Value, timeout_secs: u64) -> Result<Value, TransportError> {
        let url = format!("{}/{path}", self.base_url);
        let resp = self
            .agent
            .post(&url)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .timeout(Duration::from_secs(timeout_secs.max(1)))
            .send_json(body);
        match resp {
            Ok(r) => r
                .into_json::<Value>()
                .map_err(|e| TransportError::Transient(format!("reading {url}: {e}"))),
            Err(ureq::Error::Status(code, r)) => {
                let detail = r.into_string().unwrap_or_default();
                let msg = format!("{url}: HTTP {code}: {}", detail.chars().take(300).collect::<String>());
                if code == 429 || code >= 500 {
                    Err(TransportError::Transient(msg))
                } else {
                    Err(TransportError::Fatal(msg))
                }
            }
            Err(ureq::Error::Transport(t)) => Err(TransportError::Transient(format!("{url}: {t}"))),
        }
    }
}

impl Transport for HttpTransport {
    fn chat(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut messages = Vec::new();
        if !request.system_message.is_empty() {
            messages.push(json!({"role": "system", "content": request.system_message}));
        }
        messages.push(json!({"role": "user", "content": request.user_message}));
        let body = json!({
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
        });
        let v = self.post("chat/completions", body, request.timeout_secs)?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TransportError::Fatal("chat response without choices[0].message.content".into()))
    }

    fn embed(&self, model_id: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, TransportError> {
        let v = self.post("embeddings", json!({"model": model_id, "input": texts}), 120)?;
        let bad = || TransportError::Fatal("malformed embedding response".into());
        let data = v.get("data").and_then(Value::as_array).ok_or_else(bad)?;
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let idx = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let vec = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(bad)?
                .iter()
                .map(|x| x.as_f64().ok_or_else(bad))
                .collect::<Result<Vec<f64>, _>>()?;
            *rows.get_mut(idx).ok_or_else(bad)? = Some(vec);
        }
        rows.into_iter().map(|r| r.ok_or_else(bad)).collect()
    }
}
