use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{GatewayError, LlmBackend};

/// Client for OpenAI-compatible `/chat/completions` and `/embeddings`.
pub struct OpenAiBackend {
    base_url: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for OpenAiBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiBackend")
            .field("base_url", &self.base_url)
            .finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: usize,
    embedding: Vec<f64>,
}

impl OpenAiBackend {
    pub fn new(base_url: &str, api_key: String, timeout: Duration) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::InvalidRequest(format!("http client: {e}")))?;
        Ok(OpenAiBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            client,
        })
    }

    /// Reads the credential from `env_var`; fails before any network use
    /// when it is unset or blank.
    pub fn from_env(
        base_url: &str,
        env_var: &str,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        let key = std::env::var(env_var)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| GatewayError::MissingCredential(env_var.to_string()))?;
        Self::new(base_url, key, timeout)
    }

    fn post(&self, path: &str, body: serde_json::Value) -> Result<String, GatewayError> {
        let url = format!("{}/{path}", self.base_url);
        let response = self
            .client
            .post(&url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| GatewayError::EndpointUnreachable {
                url: url.clone(),
                reason: e.to_string(),
            })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| GatewayError::EndpointUnreachable {
                url: url.clone(),
                reason: e.to_string(),
            })?;
        if !status.is_success() {
            return Err(GatewayError::HttpStatus {
                url,
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        Ok(text)
    }
}

impl LlmBackend for OpenAiBackend {
    fn complete(
        &self,
        model: &str,
        prompt: &str,
        temperature: f64,
    ) -> Result<String, GatewayError> {
        let body = json!({
            "model": model,
            "temperature": temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let text = self.post("chat/completions", body)?;
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| GatewayError::UnexpectedPayload(format!("chat response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::UnexpectedPayload("chat response without content".into()))
    }

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let body = json!({"model": model, "input": texts});
        let text = self.post("embeddings", body)?;
        let mut parsed: EmbeddingResponse = serde_json::from_str(&text)
            .map_err(|e| GatewayError::UnexpectedPayload(format!("embedding response: {e}")))?;
        parsed.data.sort_by_key(|d| d.index);
        let vectors: Vec<Vec<f64>> = parsed.data.into_iter().map(|d| d.embedding).collect();
        if let Some(first) = vectors.first() {
            if let Some(bad) = vectors.iter().find(|v| v.len() != first.len()) {
                return Err(GatewayError::DimensionMismatch {
                    expected: first.len(),
                    actual: bad.len(),
                });
            }
        }
        Ok(vectors)
    }
}
