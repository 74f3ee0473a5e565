//! Chat and embedding requests with a deterministic replay cache.

mod cache;
mod embedding;
mod parse;
mod transport;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use cache::{chat_digest, embedding_digest, CacheEntry, CachePayload, ReplayCache, DIGEST_VERSION};
pub use embedding::{text_hash, EmbeddingMatrix};
pub use parse::{
    extract_json_object, parse_identification_reply, parse_numeric_reply, parse_reply, Identification, ModelReply,
    NumericParse, ParseStatus,
};
pub use transport::{HttpTransport, Transport, TransportError};

use crate::error::{Error, Result};
use crate::prompts::{AnswerSchema, PromptBundle};

/// Appended to the user message for the single re-ask after a malformed reply.
pub const REASK_JSON: &str = "Your previous reply could not be parsed. Respond only with the JSON object described above, with no other text.";
pub const REASK_LINE: &str = "Your previous reply could not be parsed. Respond only with the single line in the format described above.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplayMode {
    /// Serve from cache when possible, otherwise call the endpoint and record.
    #[default]
    Live,
    /// Cache only. A missing chat reply becomes a refusal carrying a note.
    Replay,
    /// Cache only. Any miss is an error.
    StrictReplay,
}

impl std::str::FromStr for ReplayMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "live" => Ok(ReplayMode::Live),
            "replay" => Ok(ReplayMode::Replay),
            "strict-replay" => Ok(ReplayMode::StrictReplay),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub system_message: String,
    pub user_message: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout_secs: u64,
}

impl ChatRequest {
    pub fn from_bundle(model_id: &str, bundle: &PromptBundle) -> Self {
        ChatRequest {
            model_id: model_id.to_string(),
            system_message: bundle.system_message.clone(),
            user_message: bundle.user_message.clone(),
            temperature: 0.0,
            max_retries: 3,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub provider_tag: String,
    pub cache_dir: PathBuf,
    pub mode: ReplayMode,
    pub max_retries: u32,
    pub timeout_secs: u64,
    /// Token-bucket refill rate; `None` disables rate limiting.
    pub requests_per_minute: Option<f64>,
    pub max_in_flight: usize,
    /// Upper bound on network calls for the lifetime of the gateway.
    pub max_requests: Option<usize>,
    pub backoff_base_ms: u64,
    /// Hash of template overrides, folded into every chat digest.
    pub template_overrides: String,
}

impl GatewayConfig {
    pub fn new(provider_tag: &str, cache_dir: impl Into<PathBuf>, mode: ReplayMode) -> Self {
        GatewayConfig {
            provider_tag: provider_tag.to_string(),
            cache_dir: cache_dir.into(),
            mode,
            max_retries: 3,
            timeout_secs: 60,
            requests_per_minute: None,
            max_in_flight: 4,
            max_requests: None,
            backoff_base_ms: 500,
            template_overrides: String::new(),
        }
    }
}

struct TokenBucket {
    capacity: f64,
    tokens: f64,
    per_sec: f64,
    last: Instant,
}

impl TokenBucket {
    fn new(per_minute: f64) -> Self {
        let capacity = per_minute.clamp(1.0, 60.0);
        TokenBucket {
            capacity,
            tokens: capacity,
            per_sec: per_minute / 60.0,
            last: Instant::now(),
        }
    }

    /// Time to wait before a token is available; takes the token when zero.
    fn try_take(&mut self) -> Duration {
        let now = Instant::now();
        self.tokens = (self.tokens + now.duration_since(self.last).as_secs_f64() * self.per_sec).min(self.capacity);
        self.last = now;
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            Duration::ZERO
        } else {
            Duration::from_secs_f64((1.0 - self.tokens) / self.per_sec)
        }
    }
}

/// One chat job for [`Gateway::complete_many`].
#[derive(Debug, Clone)]
pub struct ChatJob {
    pub request: ChatRequest,
    pub schema: AnswerSchema,
    pub zero_implausible: bool,
}

pub struct Gateway {
    config: GatewayConfig,
    cache: ReplayCache,
    transport: Option<Box<dyn Transport>>,
    limiter: Option<Mutex<TokenBucket>>,
    network_calls: AtomicUsize,
}

impl Gateway {
    pub fn new(config: GatewayConfig, transport: Option<Box<dyn Transport>>) -> Result<Self> {
        if config.mode == ReplayMode::Live && transport.is_none() {
            return Err(Error::Config("live mode needs an endpoint and API key".into()));
        }
        if config.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        let limiter = match config.requests_per_minute {
            Some(r) if r > 0.0 => Some(Mutex::new(TokenBucket::new(r))),
            Some(r) => return Err(Error::Config(format!("requests_per_minute {r} must be positive"))),
            None => None,
        };
        let cache = ReplayCache::open(&config.cache_dir, &config.provider_tag)?;
        Ok(Gateway {
            config,
            cache,
            transport,
            limiter,
            network_calls: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn cache(&self) -> &ReplayCache {
        &self.cache
    }

    /// Network calls made so far, re-asks and retries included.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn digest(&self, request: &ChatRequest, schema: AnswerSchema) -> String {
        chat_digest(
            &request.model_id,
            &request.system_message,
            &request.user_message,
            schema,
            &self.config.template_overrides,
        )
    }

    fn transport(&self) -> Result<&dyn Transport> {
        self.transport
            .as_deref()
            .ok_or_else(|| Error::Config("no transport configured".into()))
    }

    fn take_budget(&self) -> Result<()> {
        let used = self.network_calls.fetch_add(1, Ordering::SeqCst);
        if let Some(max) = self.config.max_requests {
            if used >= max {
                self.network_calls.fetch_sub(1, Ordering::SeqCst);
                return Err(Error::BudgetExhausted(max));
            }
        }
        if let Some(limiter) = &self.limiter {
            loop {
                let wait = limiter.lock().expect("limiter lock").try_take();
                if wait.is_zero() {
                    break;
                }
                thread::sleep(wait);
            }
        }
        Ok(())
    }

    /// Runs `call` with exponential backoff on transient failures only.
    fn with_retries<T>(&self, max_retries: u32, mut call: impl FnMut() -> std::result::Result<T, TransportError>) -> Result<T> {
        let mut attempt = 0;
        loop {
            self.take_budget()?;
            match call() {
                Ok(v) => return Ok(v),
                Err(TransportError::Fatal(m)) => return Err(Error::Transport(m)),
                Err(TransportError::Transient(m)) if attempt >= max_retries => {
                    return Err(Error::Transport(format!("{m} (after {} attempts)", attempt + 1)))
                }
                Err(TransportError::Transient(m)) => {
                    let delay = self.config.backoff_base_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("transient failure, retrying in {delay} ms: {m}");
                    thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
            }
        }
    }

    /// Sends a chat request, or serves it from the cache. The zero rule is
    /// applied after retrieval so cached replies stay as the model sent them.
    pub fn complete(&self, request: &ChatRequest, schema: AnswerSchema, zero_implausible: bool) -> Result<ModelReply> {
        if request.temperature != 0.0 {
            return Err(Error::invalid("audit requests must use temperature 0"));
        }
        let digest = self.digest(request, schema);
        if let Some(CachePayload::Reply(r)) = self.cache.get(&digest) {
            return Ok(r.with_zero_rule(zero_implausible));
        }
        match self.config.mode {
            ReplayMode::StrictReplay => return Err(Error::CacheMiss(digest)),
            ReplayMode::Replay => {
                log::warn!("replay cache miss for {digest}; recorded as refusal");
                return Ok(ModelReply::missing(format!("cache miss {digest}")));
            }
            ReplayMode::Live => {}
        }
        let transport = self.transport()?;
        let mut reply = parse_reply(&self.with_retries(request.max_retries, || transport.chat(request))?, schema);
        if reply.parse_status == ParseStatus::Malformed && schema != AnswerSchema::FreeText {
            let reask_text = if schema == AnswerSchema::IdentificationLine { REASK_LINE } else { REASK_JSON };
            let mut second = request.clone();
            second.user_message = format!("{}\n\n{reask_text}", request.user_message);
            reply = parse_reply(&self.with_retries(request.max_retries, || transport.chat(&second))?, schema);
            reply.reasked = true;
        }
        self.cache.insert(&digest, CachePayload::Reply(reply.clone()))?;
        Ok(reply.with_zero_rule(zero_implausible))
    }

    /// Runs jobs on at most `max_in_flight` worker threads; results keep job order.
    pub fn complete_many(&self, jobs: &[ChatJob]) -> Vec<Result<ModelReply>> {
        let next = AtomicUsize::new(0);
        let results: Vec<Mutex<Option<Result<ModelReply>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.config.max_in_flight.min(jobs.len()).max(1);
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(job) = jobs.get(i) else { break };
                    let r = self.complete(&job.request, job.schema, job.zero_implausible);
                    *results[i].lock().expect("result slot") = Some(r);
                });
            }
        });
        results
            .into_iter()
            .map(|m| m.into_inner().expect("result slot").expect("every job ran"))
            .collect()
    }

    /// One row per text, in order. Each distinct text is requested at most once.
    pub fn embed(&self, model_id: &str, texts: &[String]) -> Result<EmbeddingMatrix> {
        if texts.is_empty() {
            return Err(Error::Empty("no texts to embed".into()));
        }
        let digests: Vec<String> = texts.iter().map(|t| embedding_digest(model_id, t)).collect();
        let mut found: HashMap<String, Vec<f64>> = HashMap::new();
        let mut missing: Vec<(String, String)> = Vec::new();
        for (d, t) in digests.iter().zip(texts) {
            if found.contains_key(d) || missing.iter().any(|(md, _)| md == d) {
                continue;
            }
            match self.cache.get(d) {
                Some(CachePayload::Embedding(v)) => {
                    found.insert(d.clone(), v);
                }
                _ => missing.push((d.clone(), t.clone())),
            }
        }
        if !missing.is_empty() {
            if self.config.mode != ReplayMode::Live {
                return Err(Error::CacheMiss(missing[0].0.clone()));
            }
            let transport = self.transport()?;
            for chunk in missing.chunks(64) {
                let batch: Vec<String> = chunk.iter().map(|(_, t)| t.clone()).collect();
                let vectors = self.with_retries(self.config.max_retries, || transport.embed(model_id, &batch))?;
                if vectors.len() != batch.len() {
                    return Err(Error::Transport(format!(
                        "{} embeddings returned for {} texts",
                        vectors.len(),
                        batch.len()
                    )));
                }
                for ((d, _), v) in chunk.iter().zip(vectors) {
                    self.cache.insert(d, CachePayload::Embedding(v.clone()))?;
                    found.insert(d.clone(), v);
                }
            }
        }
        let rows = digests.iter().map(|d| found[d].clone()).collect();
        EmbeddingMatrix::new(rows, texts.iter().map(|t| text_hash(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scripted {
        replies: Mutex<Vec<String>>,
        calls: AtomicUsize,
    }

    impl Scripted {
        fn new(replies: &[&str]) -> Self {
            Scripted {
                replies: Mutex::new(replies.iter().rev().map(|s| s.to_string()).collect()),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl Transport for Scripted {
        fn chat(&self, _: &ChatRequest) -> std::result::Result<String, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.replies
                .lock()
                .unwrap()
                .pop()
                .ok_or_else(|| TransportError::Fatal("script exhausted".into()))
        }

        fn embed(&self, _: &str, texts: &[String]) -> std::result::Result<Vec<Vec<f64>>, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(texts.iter().map(|t| vec![t.len() as f64, 1.0]).collect())
        }
    }

    fn request(user: &str) -> ChatRequest {
        ChatRequest {
            model_id: "m".into(),
            system_message: "s".into(),
            user_message: user.into(),
            temperature: 0.0,
            max_retries: 0,
            timeout_secs: 1,
        }
    }

    #[test]
    fn live_then_cached() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GatewayConfig::new("t", dir.path(), ReplayMode::Live);
        let gw = Gateway::new(cfg, Some(Box::new(Scripted::new(&[r#"{"answer": 2, "confidence": 9}"#])))).unwrap();
        let a = gw.complete(&request("q"), AnswerSchema::NumericJson, false).unwrap();
        let b = gw.complete(&request("q"), AnswerSchema::NumericJson, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(gw.network_calls(), 1);
    }

    #[test]
    fn reask_once_then_refusal() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GatewayConfig::new("t", dir.path(), ReplayMode::Live);
        let gw = Gateway::new(cfg, Some(Box::new(Scripted::new(&["no idea", "still no"])))).unwrap();
        let r = gw.complete(&request("q"), AnswerSchema::NumericJson, false).unwrap();
        assert!(r.refusal && r.reasked);
        assert_eq!(r.parse_status, ParseStatus::Malformed);
        assert_eq!(gw.network_calls(), 2);

        let cfg = GatewayConfig::new("t2", dir.path(), ReplayMode::Live);
        let gw = Gateway::new(cfg, Some(Box::new(Scripted::new(&["oops", r#"{"answer": 0}"#])))).unwrap();
        let r = gw.complete(&request("q"), AnswerSchema::NumericJson, true).unwrap();
        assert!(r.refusal && r.reasked);
        assert_eq!(r.answer_numeric, Some(0.0));
    }

    #[test]
    fn replay_modes() {
        let dir = tempfile::tempdir().unwrap();
        let strict = Gateway::new(GatewayConfig::new("t", dir.path(), ReplayMode::StrictReplay), None).unwrap();
        match strict.complete(&request("q"), AnswerSchema::NumericJson, false) {
            Err(Error::CacheMiss(d)) => assert_eq!(d, strict.digest(&request("q"), AnswerSchema::NumericJson)),
            other => panic!("expected cache miss, got {other:?}"),
        }
        let soft = Gateway::new(GatewayConfig::new("t", dir.path(), ReplayMode::Replay), None).unwrap();
        let r = soft.complete(&request("q"), AnswerSchema::NumericJson, false).unwrap();
        assert!(r.refusal);
        assert!(r.note.unwrap().starts_with("cache miss"));
        assert!(Gateway::new(GatewayConfig::new("t", dir.path(), ReplayMode::Live), None).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = GatewayConfig::new("t", dir.path(), ReplayMode::Live);
        cfg.max_requests = Some(1);
        let gw = Gateway::new(cfg, Some(Box::new(Scripted::new(&[r#"{"answer": 1}"#, r#"{"answer": 2}"#])))).unwrap();
        gw.complete(&request("a"), AnswerSchema::NumericJson, false).unwrap();
        assert!(matches!(
            gw.complete(&request("b"), AnswerSchema::NumericJson, false),
            Err(Error::BudgetExhausted(1))
        ));
    }

    #[test]
    fn embeddings_dedupe_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::new(GatewayConfig::new("t", dir.path(), ReplayMode::Live), Some(Box::new(Scripted::new(&[])))).unwrap();
        let texts: Vec<String> = ["aa", "b", "aa"].iter().map(|s| s.to_string()).collect();
        let m = gw.embed("e", &texts).unwrap();
        assert_eq!((m.rows(), m.dim()), (3, 2));
        assert_eq!(m.row(0), m.row(2));
        assert_eq!(m.row(1), &[1.0, 1.0]);
        assert!(gw.embed("e", &[]).is_err());
        let again = gw.embed("e", &texts).unwrap();
        assert_eq!(again, m);
        assert_eq!(gw.network_calls(), 1);
    }

    #[test]
    fn many_keeps_order() {
        let dir = tempfile::tempdir().unwrap();
        struct Echo;
        impl Transport for Echo {
            fn chat(&self, r: &ChatRequest) -> std::result::Result<String, TransportError> {
                Ok(format!("{{\"answer\": {}}}", r.user_message))
            }
            fn embed(&self, _: &str, _: &[String]) -> std::result::Result<Vec<Vec<f64>>, TransportError> {
                Err(TransportError::Fatal("unused".into()))
            }
        }
        let gw = Gateway::new(GatewayConfig::new("t", dir.path(), ReplayMode::Live), Some(Box::new(Echo))).unwrap();
        let jobs: Vec<ChatJob> = (0..20)
            .map(|i| ChatJob { request: request(&i.to_string()), schema: AnswerSchema::NumericJson, zero_implausible: false })
            .collect();
        let out = gw.complete_many(&jobs);
        for (i, r) in out.into_iter().enumerate() {
            assert_eq!(r.unwrap().answer_numeric, Some(i as f64));
        }
    }
}
