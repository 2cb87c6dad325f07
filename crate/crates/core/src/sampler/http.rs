//! Client for OpenAI-style `/completions` endpoints that return per-token
//! log probabilities (`logprobs.tokens` / `logprobs.token_logprobs`).

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendError, Completion, CompletionRequest};
use crate::trace::FinishReason;

#[derive(Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    /// Base URL up to and including the API version, e.g. `http://host:8000/v1`.
    pub base_url: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model_id: String,
    pub request_timeout: Duration,
    pub max_retries: usize,
    pub max_concurrency: usize,
    /// Send `top_k` with requests. Servers that reject the field need `false`.
    pub supports_top_k: bool,
    pub retry_backoff: Duration,
}

impl std::fmt::Debug for BackendConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model_id", &self.model_id)
            .field("request_timeout", &self.request_timeout)
            .field("max_retries", &self.max_retries)
            .field("max_concurrency", &self.max_concurrency)
            .field("supports_top_k", &self.supports_top_k)
            .finish()
    }
}

impl BackendConfig {
    pub fn new(base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            model_id: model_id.into(),
            request_timeout: Duration::from_secs(60),
            max_retries: 3,
            max_concurrency: 3,
            supports_top_k: true,
            retry_backoff: Duration::from_millis(250),
        }
    }

    pub fn completions_url(&self) -> String {
        format!("{}/completions", self.base_url.trim_end_matches('/'))
    }
}

pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    warned_top_k: AtomicBool,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        if config.max_concurrency == 0 {
            return Err(BackendError::Protocol(
                "max_concurrency must be >= 1".into(),
            ));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            config,
            client,
            warned_top_k: AtomicBool::new(false),
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn request_body(&self, req: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": self.config.model_id,
            "prompt": req.prompt,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
            "top_p": req.top_p,
            "n": 1,
            "logprobs": 1,
        });
        if let Some(k) = req.top_k {
            if self.config.supports_top_k {
                body["top_k"] = json!(k);
            } else if !self.warned_top_k.swap(true, Ordering::Relaxed) {
                log::warn!(
                    "backend {} does not accept top_k; sampling without top-k filtering",
                    self.config.base_url
                );
            }
        }
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
}

/// Parses a `/completions` response body into a [`Completion`].
pub(crate) fn parse_completion(body: &str) -> Result<Completion, BackendError> {
    let resp: CompletionResponse =
        serde_json::from_str(body).map_err(|e| BackendError::Protocol(e.to_string()))?;
    let choice = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::Protocol("response has no choices".into()))?;
    let finish_reason = match choice.finish_reason.as_deref() {
        Some("length") => FinishReason::Length,
        Some("stop") => FinishReason::Stop,
        _ => FinishReason::Other,
    };
    let lp = choice.logprobs.ok_or(BackendError::MissingLogprobs)?;
    if lp.token_logprobs.len() != lp.tokens.len()
        || (lp.token_logprobs.is_empty() && !lp.tokens.is_empty())
    {
        return Err(BackendError::MissingLogprobs);
    }
    let logprobs = lp
        .token_logprobs
        .into_iter()
        .map(|v| v.ok_or(BackendError::MissingLogprobs))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Completion {
        tokens: lp.tokens,
        logprobs: Some(logprobs),
        finish_reason,
    })
}

impl Backend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let mut http = self
            .client
            .post(self.config.completions_url())
            .json(&self.request_body(request));
        if let Some(key) = &self.config.api_key {
            http = http.bearer_auth(key);
        }
        let resp = http
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Status { status, body });
        }
        parse_completion(&body)
    }

    fn max_concurrency(&self) -> usize {
        self.config.max_concurrency
    }

    fn max_retries(&self) -> usize {
        self.config.max_retries
    }

    fn retry_backoff(&self) -> Duration {
        self.config.retry_backoff
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_logprobs() {
        let c = parse_completion(
            r#"{"choices":[{"text":" Paris","logprobs":{"tokens":[" Par","is"],"token_logprobs":[-0.25,-0.0],"top_logprobs":null},"finish_reason":"stop"}]}"#,
        )
        .unwrap();
        assert_eq!(c.tokens, vec![" Par", "is"]);
        assert_eq!(c.logprobs, Some(vec![-0.25, -0.0]));
        assert_eq!(c.finish_reason, FinishReason::Stop);
    }

    #[test]
    fn missing_logprobs_is_capability_failure() {
        for body in [
            r#"{"choices":[{"text":"x","finish_reason":"stop"}]}"#,
            r#"{"choices":[{"text":"x","logprobs":null,"finish_reason":"stop"}]}"#,
            r#"{"choices":[{"text":"x","logprobs":{"tokens":["x"]},"finish_reason":"stop"}]}"#,
            r#"{"choices":[{"text":"x","logprobs":{"tokens":["x"],"token_logprobs":[null]}}]}"#,
        ] {
            assert_eq!(
                parse_completion(body),
                Err(BackendError::MissingLogprobs),
                "{body}"
            );
        }
    }

    #[test]
    fn retry_classification() {
        assert!(BackendError::Transport("reset".into()).is_retryable());
        assert!(BackendError::Status {
            status: 429,
            body: String::new()
        }
        .is_retryable());
        assert!(BackendError::Status {
            status: 503,
            body: String::new()
        }
        .is_retryable());
        assert!(!BackendError::Status {
            status: 400,
            body: String::new()
        }
        .is_retryable());
        assert!(!BackendError::MissingLogprobs.is_retryable());
        assert!(!BackendError::Protocol("x".into()).is_retryable());
    }

    #[test]
    fn top_k_omitted_when_unsupported() {
        let mut cfg = BackendConfig::new("http://localhost:1/v1/", "m");
        let req = CompletionRequest {
            prompt: "p".into(),
            max_tokens: 4,
            temperature: 0.9,
            top_p: 0.95,
            top_k: Some(50),
            seed: Some(9),
            sample_index: 0,
        };
        let b = HttpBackend::new(cfg.clone()).unwrap();
        assert_eq!(b.request_body(&req)["top_k"], 50);
        assert_eq!(b.request_body(&req)["logprobs"], 1);
        assert_eq!(b.request_body(&req)["n"], 1);
        assert_eq!(
            b.config().completions_url(),
            "http://localhost:1/v1/completions"
        );
        cfg.supports_top_k = false;
        let b = HttpBackend::new(cfg).unwrap();
        let body = b.request_body(&req);
        assert!(body.get("top_k").is_none());
        assert_eq!(body["seed"], 9);
    }

    #[test]
    fn debug_redacts_key() {
        let mut cfg = BackendConfig::new("http://x", "m");
        cfg.api_key = Some("sk-secret".into());
        assert!(!format!("{cfg:?}").contains("sk-secret"));
    }
}
