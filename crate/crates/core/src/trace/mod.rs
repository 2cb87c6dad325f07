//! Data model for prompts, sampled generations and scored outputs, plus the
//! line-delimited file formats that carry them between pipeline stages.

mod adapters;
mod io;
mod prompt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adapters::{read_prompts, Adapter, XSUM_INSTRUCTION};
pub use io::{
    append_trace, read_scored, read_traces, write_bytes_atomic, write_lines_atomic, write_scored,
    write_traces, SCHEMA_VERSION,
};
pub use prompt::{build_prompt, truncate_chars, DEFAULT_CONTEXT_LIMIT};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: I/O error: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: unsupported schema_version {found:?} (expected {expected:?})")]
    SchemaVersion {
        path: String,
        line: usize,
        found: String,
        expected: &'static str,
    },
    #[error("{path}: duplicate prompt id {id:?}")]
    DuplicateId { path: String, id: String },
    #[error("invalid record: {0}")]
    Invalid(String),
}

pub type Result<T, E = TraceError> = std::result::Result<T, E>;

/// Source dataset of a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    SquadV2,
    TriviaqaNocontext,
    Xsum,
    Custom,
}

/// One evaluation item: a context passage and the question asked about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub dataset: Dataset,
    #[serde(default)]
    pub context: String,
    pub question: String,
    /// Stored for downstream evaluation only; detection never reads it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
}

impl PromptRecord {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(TraceError::Invalid("prompt id must be nonempty".into()));
        }
        Ok(())
    }
}

/// Stochastic decoding parameters sent with every sample request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub temperature: f64,
    pub top_p: f64,
    /// 0 disables top-k filtering.
    pub top_k: u32,
    pub max_new_tokens: u32,
    pub num_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            temperature: 0.9,
            top_p: 0.95,
            top_k: 50,
            max_new_tokens: 40,
            num_samples: 3,
            seed: None,
        }
    }
}

impl DecodingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(TraceError::Invalid(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(TraceError::Invalid(format!(
                "top_p must lie in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(TraceError::Invalid(
                "max_new_tokens must be positive".into(),
            ));
        }
        if self.num_samples == 0 {
            return Err(TraceError::Invalid("num_samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Length,
    Stop,
    Other,
}

/// One sampled completion with the log probability of each emitted token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSample {
    pub sample_index: usize,
    pub tokens: Vec<String>,
    /// Natural-log probabilities, each `<= 0`.
    pub logprobs: Vec<f64>,
    pub finish_reason: FinishReason,
}

impl GenerationSample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.len() != self.logprobs.len() {
            return Err(TraceError::Invalid(format!(
                "sample {}: {} tokens but {} logprobs",
                self.sample_index,
                self.tokens.len(),
                self.logprobs.len()
            )));
        }
        if let Some((t, lp)) = self
            .logprobs
            .iter()
            .enumerate()
            .find(|(_, lp)| !(lp.is_finite() && **lp <= 0.0))
        {
            return Err(TraceError::Invalid(format!(
                "sample {}: logprob at position {t} is {lp}, expected a finite value <= 0",
                self.sample_index
            )));
        }
        Ok(())
    }
}

/// All samples drawn for one prompt from one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSet {
    pub prompt_id: String,
    pub model_id: String,
    pub config: DecodingConfig,
    pub samples: Vec<GenerationSample>,
    #[serde(default)]
    pub reference_index: usize,
}

impl GenerationSet {
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(TraceError::Invalid(format!(
                "generation set for {:?} has no samples",
                self.prompt_id
            )));
        }
        if self.reference_index >= self.samples.len() {
            return Err(TraceError::Invalid(format!(
                "reference_index {} out of range for {} samples",
                self.reference_index,
                self.samples.len()
            )));
        }
        for (i, sample) in self.samples.iter().enumerate() {
            if sample.sample_index != i {
                return Err(TraceError::Invalid(format!(
                    "sample at slot {i} carries sample_index {}",
                    sample.sample_index
                )));
            }
            sample.validate()?;
        }
        Ok(())
    }

    pub fn reference(&self) -> &GenerationSample {
        &self.samples[self.reference_index]
    }
}

/// Per-position statistics for one token of the reference generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub position: usize,
    pub token: String,
    pub mean_logprob: f64,
    /// `None` when fewer than `min_support` samples reach this position.
    pub variance: Option<f64>,
    pub support: usize,
    pub hallucinated: bool,
}

impl TokenScore {
    pub fn is_scored(&self) -> bool {
        self.variance.is_some()
    }
}

/// A reference generation annotated token by token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredGeneration {
    pub prompt_id: String,
    pub model_id: String,
    pub answer_text: String,
    pub threshold: f64,
    #[serde(rename = "tokens")]
    pub token_scores: Vec<TokenScore>,
    pub hallucinated_count: usize,
    pub scored_count: usize,
}

impl ScoredGeneration {
    /// Builds the record and derives both counters from `token_scores`.
    pub fn new(
        prompt_id: String,
        model_id: String,
        threshold: f64,
        token_scores: Vec<TokenScore>,
    ) -> Self {
        let answer_text = token_scores.iter().map(|s| s.token.as_str()).collect();
        let hallucinated_count = token_scores.iter().filter(|s| s.hallucinated).count();
        let scored_count = token_scores.iter().filter(|s| s.is_scored()).count();
        Self {
            prompt_id,
            model_id,
            answer_text,
            threshold,
            token_scores,
            hallucinated_count,
            scored_count,
        }
    }

    pub fn total_tokens(&self) -> usize {
        self.token_scores.len()
    }

    pub fn validate(&self) -> Result<()> {
        let flagged = self.token_scores.iter().filter(|s| s.hallucinated).count();
        let scored = self.token_scores.iter().filter(|s| s.is_scored()).count();
        if flagged != self.hallucinated_count || scored != self.scored_count {
            return Err(TraceError::Invalid(format!(
                "{}: counters ({} flagged, {} scored) disagree with token entries ({flagged}, {scored})",
                self.prompt_id, self.hallucinated_count, self.scored_count
            )));
        }
        for s in &self.token_scores {
            let expected = s.variance.is_some_and(|v| v > self.threshold);
            if s.hallucinated != expected {
                return Err(TraceError::Invalid(format!(
                    "{}: token at position {} has hallucinated={} but variance {:?} vs threshold {}",
                    self.prompt_id, s.position, s.hallucinated, s.variance, self.threshold
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(i: usize, lps: &[f64]) -> GenerationSample {
        GenerationSample {
            sample_index: i,
            tokens: lps.iter().map(|_| "x".to_string()).collect(),
            logprobs: lps.to_vec(),
            finish_reason: FinishReason::Length,
        }
    }

    #[test]
    fn decoding_defaults() {
        let c = DecodingConfig::default();
        assert_eq!(c.temperature, 0.9);
        assert_eq!(c.top_p, 0.95);
        assert_eq!(c.top_k, 50);
        assert_eq!(c.max_new_tokens, 40);
        assert_eq!(c.num_samples, 3);
        c.validate().unwrap();
    }

    #[test]
    fn decoding_rejects_bad_values() {
        for c in [
            DecodingConfig {
                temperature: 0.0,
                ..Default::default()
            },
            DecodingConfig {
                top_p: 0.0,
                ..Default::default()
            },
            DecodingConfig {
                top_p: 1.5,
                ..Default::default()
            },
            DecodingConfig {
                num_samples: 0,
                ..Default::default()
            },
            DecodingConfig {
                max_new_tokens: 0,
                ..Default::default()
            },
        ] {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn sample_rejects_positive_logprob() {
        assert!(sample(0, &[-0.1, 0.2]).validate().is_err());
        assert!(sample(0, &[-0.1, f64::NAN]).validate().is_err());
        sample(0, &[-0.1, 0.0, -0.0]).validate().unwrap();
    }

    #[test]
    fn set_checks_reference_and_ordering() {
        let mut set = GenerationSet {
            prompt_id: "p".into(),
            model_id: "m".into(),
            config: DecodingConfig::default(),
            samples: vec![sample(0, &[-1.0]), sample(1, &[-1.0])],
            reference_index: 2,
        };
        assert!(set.validate().is_err());
        set.reference_index = 1;
        set.validate().unwrap();
        set.samples.swap(0, 1);
        assert!(set.validate().is_err());
        set.samples.clear();
        assert!(set.validate().is_err());
    }

    #[test]
    fn scored_counters_follow_entries() {
        let scores = vec![
            TokenScore {
                position: 0,
                token: "Marie".into(),
                mean_logprob: -1.0,
                variance: Some(0.72),
                support: 3,
                hallucinated: true,
            },
            TokenScore {
                position: 1,
                token: " Curie".into(),
                mean_logprob: -1.0,
                variance: None,
                support: 1,
                hallucinated: false,
            },
        ];
        let s = ScoredGeneration::new("p".into(), "m".into(), 0.5, scores);
        assert_eq!(s.answer_text, "Marie Curie");
        assert_eq!(s.hallucinated_count, 1);
        assert_eq!(s.scored_count, 1);
        assert_eq!(s.total_tokens(), 2);
        s.validate().unwrap();

        let mut bad = s.clone();
        bad.token_scores[0].hallucinated = false;
        bad.hallucinated_count = 0;
        assert!(bad.validate().is_err());
    }
}
