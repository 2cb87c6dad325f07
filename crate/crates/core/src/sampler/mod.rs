//! Collecting `n` stochastic completions per prompt from a backend that
//! reports per-token log probabilities.

mod http;
mod mock;
mod run;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::trace::{DecodingConfig, FinishReason, GenerationSample, GenerationSet};

pub use http::{BackendConfig, HttpBackend};
pub use mock::{mock_generate, MockBackend, MockModelSpec, PlantedRegion};
pub use run::{run_sampling, ErrorRecord, RunOptions, RunSummary};

/// One sampled completion request (`n = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    /// `None` when top-k filtering is disabled.
    pub top_k: Option<u32>,
    pub seed: Option<u64>,
    pub sample_index: usize,
}

/// What a backend returned for one request.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub tokens: Vec<String>,
    /// `None` when the backend did not report log probabilities.
    pub logprobs: Option<Vec<f64>>,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("backend response carries no per-token log probabilities")]
    MissingLogprobs,
}

impl BackendError {
    /// Transport failures, 429 and 5xx are retried; everything else is final.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status == 429 || (500..600).contains(status),
            _ => false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("backend cannot be used for detection: {0}")]
    Capability(String),
    #[error("only {succeeded} of {requested} samples succeeded; last error: {last_error}")]
    Partial {
        succeeded: usize,
        requested: usize,
        last_error: BackendError,
    },
    #[error("invalid decoding config: {0}")]
    Config(String),
}

/// A source of sampled completions.
///
/// Implementations must be callable from several threads at once.
pub trait Backend: Send + Sync {
    fn model_id(&self) -> &str;

    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError>;

    /// Upper bound on simultaneous `complete` calls.
    fn max_concurrency(&self) -> usize {
        1
    }

    fn max_retries(&self) -> usize {
        0
    }

    fn retry_backoff(&self) -> Duration {
        Duration::ZERO
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Combines a parent seed with a child index into an independent sub-seed.
pub fn mix_seed(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ splitmix64(index))
}

/// Seed of the `sample_index`-th sample drawn under a prompt-level seed.
pub fn sample_seed(prompt_seed: u64, sample_index: usize) -> u64 {
    mix_seed(prompt_seed, sample_index as u64)
}

/// First 8 bytes (little endian) of the SHA-256 of `text`.
pub fn text_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn request_for(prompt: &str, config: &DecodingConfig, sample_index: usize) -> CompletionRequest {
    CompletionRequest {
        prompt: prompt.to_string(),
        max_tokens: config.max_new_tokens,
        temperature: config.temperature,
        top_p: config.top_p,
        top_k: (config.top_k > 0).then_some(config.top_k),
        seed: config.seed.map(|s| sample_seed(s, sample_index)),
        sample_index,
    }
}

fn complete_with_retries(
    backend: &dyn Backend,
    request: &CompletionRequest,
) -> Result<GenerationSample, BackendError> {
    let mut attempt = 0;
    loop {
        let result = backend.complete(request).and_then(|c| {
            let logprobs = c.logprobs.ok_or(BackendError::MissingLogprobs)?;
            let sample = GenerationSample {
                sample_index: request.sample_index,
                tokens: c.tokens,
                logprobs,
                finish_reason: c.finish_reason,
            };
            sample
                .validate()
                .map_err(|e| BackendError::Protocol(e.to_string()))?;
            Ok(sample)
        });
        match result {
            Err(e) if e.is_retryable() && attempt < backend.max_retries() => {
                let wait = backend.retry_backoff() * 2u32.saturating_pow(attempt as u32);
                log::warn!(
                    "sample {} attempt {} failed ({e}); retrying in {wait:?}",
                    request.sample_index,
                    attempt + 1
                );
                std::thread::sleep(wait);
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Draws `config.num_samples` independent completions for one prompt.
///
/// Requests fan out over at most `backend.max_concurrency()` threads and the
/// results are reassembled in sample order. Each sample slot is filled at
/// most once; retries only repeat the failed slot.
pub fn sample_generations(
    prompt_id: &str,
    prompt: &str,
    config: &DecodingConfig,
    backend: &dyn Backend,
) -> Result<GenerationSet, SamplerError> {
    config
        .validate()
        .map_err(|e| SamplerError::Config(e.to_string()))?;
    let n = config.num_samples;
    let slots: Mutex<Vec<Option<Result<GenerationSample, BackendError>>>> =
        Mutex::new(vec![None; n]);
    let next = AtomicUsize::new(0);
    let workers = backend.max_concurrency().clamp(1, n);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result = complete_with_retries(backend, &request_for(prompt, config, i));
                slots.lock().expect("slot lock poisoned")[i] = Some(result);
            });
        }
    });

    let mut samples = Vec::with_capacity(n);
    let mut last_error = None;
    for slot in slots.into_inner().expect("slot lock poisoned") {
        match slot.expect("every slot is visited") {
            Ok(s) => samples.push(s),
            Err(BackendError::MissingLogprobs) => {
                return Err(SamplerError::Capability(format!(
                    "model {:?} returned no per-token log probabilities",
                    backend.model_id()
                )))
            }
            Err(e) => last_error = Some(e),
        }
    }
    if let Some(last_error) = last_error {
        return Err(SamplerError::Partial {
            succeeded: samples.len(),
            requested: n,
            last_error,
        });
    }
    Ok(GenerationSet {
        prompt_id: prompt_id.to_string(),
        model_id: backend.model_id().to_string(),
        config: config.clone(),
        samples,
        reference_index: 0,
    })
}

#[cfg(test)]
mod tests;
