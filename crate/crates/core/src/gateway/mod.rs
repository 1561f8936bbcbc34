//! Access to chat-completion and embedding endpoints.
//!
//! A [`Gateway`] wraps a backend (a live OpenAI-compatible endpoint or the
//! fixture-driven [`MockBackend`]) with a content-addressed response cache,
//! structured-output retries and call accounting. Every LLM-dependent step
//! goes through it, so the whole pipeline can run offline and
//! deterministically against the mock.

mod cache;
mod mock;
mod openai;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheEntry, ResponseCache};
pub use mock::{ConcurrencyAnswer, MockBackend, MockFixture, MockRequirement};
pub use openai::OpenAiBackend;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("endpoint {url} unreachable: {reason}")]
    EndpointUnreachable { url: String, reason: String },
    #[error("endpoint {url} returned HTTP {status}: {body}")]
    HttpStatus {
        url: String,
        status: u16,
        body: String,
    },
    #[error("credential environment variable {0} is not set")]
    MissingCredential(String),
    #[error("response still malformed after {attempts} attempt(s): {reason}")]
    MalformedAfterRetries { attempts: u32, reason: String },
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("unexpected endpoint payload: {0}")]
    UnexpectedPayload(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cache I/O error at {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseFormat {
    StructuredJson,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LlmRequest {
    Completion {
        model: String,
        prompt: String,
        format: ResponseFormat,
    },
    Embedding {
        model: String,
        texts: Vec<String>,
    },
}

impl LlmRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self {
            LlmRequest::Completion { prompt, .. } if prompt.trim().is_empty() => Err(
                GatewayError::InvalidRequest("completion prompt is empty".into()),
            ),
            LlmRequest::Embedding { texts, .. } if texts.is_empty() => Err(
                GatewayError::InvalidRequest("embedding input list is empty".into()),
            ),
            _ => Ok(()),
        }
    }
}

fn canonical_text(text: &str) -> String {
    text.replace("\r\n", "\n").trim().to_string()
}

/// Hex SHA-256 over the request kind, model and canonicalized payload.
pub fn cache_key(request: &LlmRequest) -> String {
    let canonical = match request {
        LlmRequest::Completion {
            model,
            prompt,
            format,
        } => serde_json::json!({
            "kind": "completion",
            "model": model,
            "format": format,
            "prompt": canonical_text(prompt),
        }),
        LlmRequest::Embedding { model, texts } => serde_json::json!({
            "kind": "embedding",
            "model": model,
            "texts": texts.iter().map(|t| canonical_text(t)).collect::<Vec<_>>(),
        }),
    };
    let digest = Sha256::digest(canonical.to_string().as_bytes());
    hex::encode(digest)
}

/// A dense embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `1 - cos(a, b)`, in `[0, 2]`. A zero vector is treated as orthogonal
    /// to everything.
    pub fn cosine_distance(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let na = self.0.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb = other.0.iter().map(|b| b * b).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return 1.0;
        }
        (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
    }
}

/// Counters for one gateway. All are monotone within a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GatewayStats {
    /// Completion calls that reached the backend, retries included.
    pub completion_calls: u64,
    pub embedding_calls: u64,
    pub cache_hits: u64,
    #[serde(with = "duration_secs")]
    pub total_latency: Duration,
}

/// Serializes a `Duration` as fractional seconds.
pub mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

/// Something that can answer completion and embedding requests.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, model: &str, prompt: &str, temperature: f64)
        -> Result<String, GatewayError>;

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewaySettings {
    pub completion_model: String,
    pub embedding_model: String,
    pub temperature: f64,
    /// Extra attempts after a malformed structured response.
    pub max_retries: u32,
    /// In-flight request limit for batched calls.
    pub concurrency: usize,
    /// Texts per embedding call.
    pub embedding_batch: usize,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        GatewaySettings {
            completion_model: "gpt-4o".into(),
            embedding_model: "text-embedding-3-small".into(),
            temperature: 0.0,
            max_retries: 2,
            concurrency: 4,
            embedding_batch: 256,
        }
    }
}

pub struct Gateway {
    backend: Box<dyn LlmBackend>,
    cache: Option<ResponseCache>,
    settings: GatewaySettings,
    stats: Mutex<GatewayStats>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("cache", &self.cache)
            .field("settings", &self.settings)
            .finish_non_exhaustive()
    }
}

/// Validates the text of a completion; `Err` carries the reason used in the
/// corrective follow-up prompt.
pub type ResponseCheck<'a> = &'a (dyn Fn(&str) -> Result<(), String> + Sync);

impl Gateway {
    pub fn new(backend: Box<dyn LlmBackend>, settings: GatewaySettings) -> Self {
        Gateway {
            backend,
            cache: None,
            settings,
            stats: Mutex::new(GatewayStats::default()),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    /// Gateway over a mock fixture, no cache, default settings.
    pub fn mock(fixture: MockFixture) -> Self {
        Gateway::new(
            Box::new(MockBackend::new(fixture)),
            GatewaySettings::default(),
        )
    }

    pub fn settings(&self) -> &GatewaySettings {
        &self.settings
    }

    pub fn stats(&self) -> GatewayStats {
        self.stats.lock().expect("stats lock").clone()
    }

    pub fn completion_request(&self, prompt: String, format: ResponseFormat) -> LlmRequest {
        LlmRequest::Completion {
            model: self.settings.completion_model.clone(),
            prompt,
            format,
        }
    }

    fn record(&self, f: impl FnOnce(&mut GatewayStats)) {
        f(&mut self.stats.lock().expect("stats lock"));
    }

    fn cached(&self, key: &str) -> Result<Option<String>, GatewayError> {
        let Some(cache) = &self.cache else {
            return Ok(None);
        };
        let hit = cache.get(key)?;
        if hit.is_some() {
            self.record(|s| s.cache_hits += 1);
        }
        Ok(hit.map(|e| e.response_text))
    }

    fn store(&self, key: &str, text: &str) -> Result<(), GatewayError> {
        match &self.cache {
            Some(cache) => cache.put(key, text),
            None => Ok(()),
        }
    }

    /// Sends a completion request. Structured-JSON requests are checked for
    /// parseable JSON and retried.
    pub fn complete(&self, request: &LlmRequest) -> Result<String, GatewayError> {
        match request {
            LlmRequest::Completion {
                format: ResponseFormat::StructuredJson,
                ..
            } => self.complete_checked(request, &|text| {
                extract_json(text).map(|_| ()).map_err(|e| e.to_string())
            }),
            _ => self.complete_checked(request, &|_| Ok(())),
        }
    }

    /// Sends a completion request, retrying up to `max_retries` times with a
    /// corrective note while `check` rejects the answer. Only accepted
    /// answers are cached.
    pub fn complete_checked(
        &self,
        request: &LlmRequest,
        check: ResponseCheck<'_>,
    ) -> Result<String, GatewayError> {
        request.validate()?;
        let LlmRequest::Completion { model, prompt, .. } = request else {
            return Err(GatewayError::InvalidRequest(
                "complete() needs a completion request".into(),
            ));
        };
        let key = cache_key(request);
        if let Some(text) = self.cached(&key)? {
            if check(&text).is_ok() {
                return Ok(text);
            }
            log::warn!("cached response {key} fails validation; refetching");
        }

        let mut attempt_prompt = prompt.clone();
        let mut last_reason = String::new();
        let attempts = self.settings.max_retries + 1;
        for attempt in 1..=attempts {
            let started = Instant::now();
            let result = self
                .backend
                .complete(model, &attempt_prompt, self.settings.temperature);
            let elapsed = started.elapsed();
            self.record(|s| {
                s.completion_calls += 1;
                s.total_latency += elapsed;
            });
            let text = result?;
            match check(&text) {
                Ok(()) => {
                    self.store(&key, &text)?;
                    return Ok(text);
                }
                Err(reason) => {
                    log::warn!("attempt {attempt}/{attempts}: malformed response: {reason}");
                    attempt_prompt = format!(
                        "{prompt}\n\nYour previous answer could not be used ({reason}). \
                         Reply again following the requested output format exactly, \
                         with no additional commentary."
                    );
                    last_reason = reason;
                }
            }
        }
        Err(GatewayError::MalformedAfterRetries {
            attempts,
            reason: last_reason,
        })
    }

    /// Embeds `texts`, one vector per input in input order.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "embedding input list is empty".into(),
            ));
        }
        let batches: Vec<&[String]> = texts.chunks(self.settings.embedding_batch.max(1)).collect();
        let results = self.map_bounded(&batches, |batch| self.embed_batch(batch));
        let mut out = Vec::with_capacity(texts.len());
        for r in results {
            out.extend(r?);
        }
        if let Some(first) = out.first() {
            let expected = first.dim();
            if expected == 0 {
                return Err(GatewayError::DimensionMismatch {
                    expected: 1,
                    actual: 0,
                });
            }
            if let Some(bad) = out.iter().find(|v| v.dim() != expected) {
                return Err(GatewayError::DimensionMismatch {
                    expected,
                    actual: bad.dim(),
                });
            }
        }
        Ok(out)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        let request = LlmRequest::Embedding {
            model: self.settings.embedding_model.clone(),
            texts: texts.to_vec(),
        };
        let key = cache_key(&request);
        if let Some(text) = self.cached(&key)? {
            if let Ok(vectors) = serde_json::from_str::<Vec<EmbeddingVector>>(&text) {
                if vectors.len() == texts.len() {
                    return Ok(vectors);
                }
            }
        }
        let started = Instant::now();
        let result = self.backend.embed(&self.settings.embedding_model, texts);
        let elapsed = started.elapsed();
        self.record(|s| {
            s.embedding_calls += 1;
            s.total_latency += elapsed;
        });
        let raw = result?;
        if raw.len() != texts.len() {
            return Err(GatewayError::UnexpectedPayload(format!(
                "{} embeddings for {} inputs",
                raw.len(),
                texts.len()
            )));
        }
        let vectors: Vec<EmbeddingVector> = raw.into_iter().map(EmbeddingVector).collect();
        let text = serde_json::to_string(&vectors)
            .map_err(|e| GatewayError::UnexpectedPayload(e.to_string()))?;
        self.store(&key, &text)?;
        Ok(vectors)
    }

    /// Applies `f` to every item with at most `concurrency` calls in
    /// flight, returning results in input order.
    pub fn map_bounded<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync,
    {
        bounded_map(items, self.settings.concurrency, f)
    }
}

/// Order-preserving parallel map with at most `limit` worker threads.
pub fn bounded_map<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = limit.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("slot lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("slot lock")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

/// Pulls the first JSON value out of an LLM answer, tolerating code fences
/// and prose around it.
pub fn extract_json(text: &str) -> Result<serde_json::Value, serde_json::Error> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Ok(v);
    }
    let start = trimmed.find(['[', '{']).unwrap_or(0);
    let mut stream = serde_json::Deserializer::from_str(&trimmed[start..]).into_iter();
    match stream.next() {
        Some(v) => v,
        None => serde_json::from_str(""),
    }
}
