//! Cross-sample log-probability statistics and variance thresholding.
//!
//! For each position `t` of the reference generation, the log probabilities
//! that every sample assigned to its own token at `t` are pooled; their
//! variance is the hallucination score and a token is flagged when the score
//! is strictly greater than the threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{GenerationSet, ScoredGeneration, TokenScore};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("variance needs at least 2 samples, got {0}")]
    InsufficientSupport(usize),
    #[error("generation set {prompt_id:?} has {samples} sample(s); at least {min_support} are needed to score any position")]
    TooFewSamples {
        prompt_id: String,
        samples: usize,
        min_support: usize,
    },
    #[error("generation set {0:?} has no samples")]
    EmptySet(String),
    #[error("invalid detector config: {0}")]
    Config(String),
}

/// Divisor used for the per-position variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum VarianceDenominator {
    /// Divide by `n`.
    #[default]
    #[value(name = "n")]
    PopulationN,
    /// Divide by `n - 1`.
    #[value(name = "n-1")]
    SampleNMinus1,
}

/// How positions are matched across samples. Only index alignment exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    #[default]
    Positional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub threshold: f64,
    pub variance_denominator: VarianceDenominator,
    pub min_support: usize,
    pub alignment: Alignment,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            variance_denominator: VarianceDenominator::PopulationN,
            min_support: 2,
            alignment: Alignment::Positional,
        }
    }
}

impl DetectorConfig {
    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            threshold,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(DetectorError::Config(format!(
                "threshold must be a finite value >= 0, got {}",
                self.threshold
            )));
        }
        if self.min_support < 2 {
            return Err(DetectorError::Config(format!(
                "min_support must be >= 2, got {}",
                self.min_support
            )));
        }
        Ok(())
    }
}

/// Mean and variance of the log probabilities observed at one position.
///
/// Uses two passes (mean, then squared deviations). An all-equal input
/// yields exactly `(x, 0.0)`.
pub fn position_stats(
    logprobs: &[f64],
    denom: VarianceDenominator,
) -> Result<(f64, f64), DetectorError> {
    let n = logprobs.len();
    if n < 2 {
        return Err(DetectorError::InsufficientSupport(n));
    }
    let first = logprobs[0];
    if logprobs.iter().all(|&x| x == first) {
        return Ok((first, 0.0));
    }
    let mean = logprobs.iter().sum::<f64>() / n as f64;
    let ss: f64 = logprobs.iter().map(|&x| (x - mean) * (x - mean)).sum();
    let d = match denom {
        VarianceDenominator::PopulationN => n,
        VarianceDenominator::SampleNMinus1 => n - 1,
    };
    Ok((mean, (ss / d as f64).max(0.0)))
}

/// Annotates the reference sample of `set` with per-position statistics.
pub fn score_generation_set(
    set: &GenerationSet,
    cfg: &DetectorConfig,
) -> Result<ScoredGeneration, DetectorError> {
    cfg.validate()?;
    if set.samples.is_empty() {
        return Err(DetectorError::EmptySet(set.prompt_id.clone()));
    }
    if set.samples.len() < cfg.min_support {
        return Err(DetectorError::TooFewSamples {
            prompt_id: set.prompt_id.clone(),
            samples: set.samples.len(),
            min_support: cfg.min_support,
        });
    }
    let reference = set.samples.get(set.reference_index).ok_or_else(|| {
        DetectorError::Config(format!(
            "reference_index {} out of range",
            set.reference_index
        ))
    })?;

    let mut column = Vec::with_capacity(set.samples.len());
    let token_scores = reference
        .tokens
        .iter()
        .enumerate()
        .map(|(t, token)| {
            column.clear();
            column.extend(
                set.samples
                    .iter()
                    .filter_map(|s| s.logprobs.get(t).copied()),
            );
            let support = column.len();
            let (mean_logprob, variance) = if support >= cfg.min_support {
                let (m, v) = position_stats(&column, cfg.variance_denominator)
                    .expect("support >= min_support >= 2");
                (m, Some(v))
            } else {
                (column.iter().sum::<f64>() / support as f64, None)
            };
            TokenScore {
                position: t,
                token: token.clone(),
                mean_logprob,
                variance,
                support,
                hallucinated: variance.is_some_and(|v| v > cfg.threshold),
            }
        })
        .collect();

    Ok(ScoredGeneration::new(
        set.prompt_id.clone(),
        set.model_id.clone(),
        cfg.threshold,
        token_scores,
    ))
}

/// A generation set that could not be scored.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFailure {
    pub index: usize,
    pub prompt_id: String,
    pub error: DetectorError,
}

#[derive(Debug, Clone, Default)]
pub struct CorpusScores {
    pub scored: Vec<ScoredGeneration>,
    pub failures: Vec<ScoreFailure>,
}

/// Scores every set in parallel. Output order follows input order.
pub fn score_corpus(traces: &[GenerationSet], cfg: &DetectorConfig) -> CorpusScores {
    let results: Vec<_> = traces
        .par_iter()
        .map(|set| score_generation_set(set, cfg))
        .collect();
    let mut out = CorpusScores::default();
    for (index, (res, set)) in results.into_iter().zip(traces).enumerate() {
        match res {
            Ok(s) => out.scored.push(s),
            Err(error) => out.failures.push(ScoreFailure {
                index,
                prompt_id: set.prompt_id.clone(),
                error,
            }),
        }
    }
    out
}

/// Re-applies a different threshold to already-computed variances.
pub fn apply_threshold(scored: &ScoredGeneration, threshold: f64) -> ScoredGeneration {
    let token_scores = scored
        .token_scores
        .iter()
        .map(|s| TokenScore {
            hallucinated: s.variance.is_some_and(|v| v > threshold),
            ..s.clone()
        })
        .collect();
    ScoredGeneration::new(
        scored.prompt_id.clone(),
        scored.model_id.clone(),
        threshold,
        token_scores,
    )
}
