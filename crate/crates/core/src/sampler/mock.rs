//! Seeded synthetic backend with known per-position noise.
//!
//! Every sample of a prompt emits the same token string at a given position,
//! so positional alignment is exact. The log probability at position `t` is
//! `base_logprob + sd(t) * z` with `z` standard normal and drawn per sample,
//! where `sd(t)` is the noise level of the planted region covering `t` or
//! `stable_noise_sd` elsewhere. Values are capped at 0.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    mix_seed, request_for, sample_seed, text_hash, Backend, BackendError, Completion,
    CompletionRequest,
};
use crate::trace::{DecodingConfig, FinishReason, GenerationSample, GenerationSet};

/// Positions `start..=end` carry noise with standard deviation `noise_sd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRegion {
    pub start: usize,
    pub end: usize,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockModelSpec {
    pub seed: u64,
    pub vocab: Vec<String>,
    pub answer_length: usize,
    pub base_logprob: f64,
    pub stable_noise_sd: f64,
    #[serde(default)]
    pub planted_regions: Vec<PlantedRegion>,
}

impl Default for MockModelSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            vocab: [
                " the",
                " a",
                " of",
                " Marie",
                " Curie",
                " discovered",
                " in",
                " 1898",
                " and",
                " radium",
                " was",
                " by",
                ".",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            answer_length: 40,
            base_logprob: -4.0,
            stable_noise_sd: 0.0,
            planted_regions: Vec::new(),
        }
    }
}

impl MockModelSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.vocab.is_empty() {
            return Err("vocab must not be empty".into());
        }
        if self.answer_length == 0 {
            return Err("answer_length must be positive".into());
        }
        if !(self.base_logprob <= 0.0 && self.base_logprob.is_finite()) {
            return Err(format!(
                "base_logprob must be <= 0, got {}",
                self.base_logprob
            ));
        }
        if !(self.stable_noise_sd >= 0.0 && self.stable_noise_sd.is_finite()) {
            return Err(format!(
                "stable_noise_sd must be >= 0, got {}",
                self.stable_noise_sd
            ));
        }
        let mut regions: Vec<&PlantedRegion> = self.planted_regions.iter().collect();
        regions.sort_by_key(|r| r.start);
        for r in &regions {
            if r.start > r.end || r.end >= self.answer_length {
                return Err(format!(
                    "planted region {}..={} must lie within [0, {})",
                    r.start, r.end, self.answer_length
                ));
            }
            if !(r.noise_sd > self.stable_noise_sd && r.noise_sd.is_finite()) {
                return Err(format!(
                    "planted region {}..={} noise_sd {} must exceed stable_noise_sd {}",
                    r.start, r.end, r.noise_sd, self.stable_noise_sd
                ));
            }
        }
        if let Some(w) = regions.windows(2).find(|w| w[1].start <= w[0].end) {
            return Err(format!(
                "planted regions {}..={} and {}..={} overlap",
                w[0].start, w[0].end, w[1].start, w[1].end
            ));
        }
        Ok(())
    }

    /// Noise standard deviation at `position`.
    pub fn noise_sd_at(&self, position: usize) -> f64 {
        self.planted_regions
            .iter()
            .find(|r| (r.start..=r.end).contains(&position))
            .map_or(self.stable_noise_sd, |r| r.noise_sd)
    }

    fn sample(
        &self,
        prompt: &str,
        max_tokens: u32,
        seed: u64,
        sample_index: usize,
    ) -> GenerationSample {
        let prompt_key = mix_seed(self.seed, text_hash(prompt));
        let len = self.answer_length.min(max_tokens as usize);
        let mut token_rng = ChaCha8Rng::seed_from_u64(prompt_key);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(prompt_key, seed));
        let mut tokens = Vec::with_capacity(len);
        let mut logprobs = Vec::with_capacity(len);
        for t in 0..len {
            tokens.push(self.vocab[token_rng.random_range(0..self.vocab.len())].clone());
            let z: f64 = noise_rng.sample(StandardNormal);
            logprobs.push((self.base_logprob + self.noise_sd_at(t) * z).min(0.0));
        }
        GenerationSample {
            sample_index,
            tokens,
            logprobs,
            finish_reason: if len < self.answer_length {
                FinishReason::Length
            } else {
                FinishReason::Stop
            },
        }
    }
}

/// Generates a full set directly, without going through a [`Backend`].
///
/// Identical to running [`super::sample_generations`] against a
/// [`MockBackend`] built from the same spec.
pub fn mock_generate(
    prompt_id: &str,
    prompt: &str,
    config: &DecodingConfig,
    spec: &MockModelSpec,
    model_id: &str,
) -> GenerationSet {
    let samples = (0..config.num_samples)
        .map(|i| {
            let req = request_for(prompt, config, i);
            let seed = req.seed.unwrap_or_else(|| sample_seed(0, i));
            spec.sample(prompt, config.max_new_tokens, seed, i)
        })
        .collect();
    GenerationSet {
        prompt_id: prompt_id.to_string(),
        model_id: model_id.to_string(),
        config: config.clone(),
        samples,
        reference_index: 0,
    }
}

/// [`Backend`] adapter around a [`MockModelSpec`]. Thread-safe and pure.
#[derive(Debug, Clone)]
pub struct MockBackend {
    pub spec: MockModelSpec,
    pub model_id: String,
    pub max_concurrency: usize,
}

impl MockBackend {
    pub fn new(spec: MockModelSpec, model_id: impl Into<String>) -> Self {
        Self {
            spec,
            model_id: model_id.into(),
            max_concurrency: 4,
        }
    }
}

impl Backend for MockBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let seed = request
            .seed
            .unwrap_or_else(|| sample_seed(0, request.sample_index));
        let s = self.spec.sample(
            &request.prompt,
            request.max_tokens,
            seed,
            request.sample_index,
        );
        Ok(Completion {
            tokens: s.tokens,
            logprobs: Some(s.logprobs),
            finish_reason: s.finish_reason,
        })
    }

    fn max_concurrency(&self) -> usize {
        self.max_concurrency
    }
}
