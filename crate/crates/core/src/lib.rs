//! Reference-free, token-level hallucination detection.
//!
//! Several stochastic completions are drawn for each prompt from any backend
//! that reports per-token log probabilities. At each token position the
//! variance of those log probabilities across completions is the
//! hallucination score, and positions whose variance exceeds a fixed
//! threshold are flagged. Corpus-level diagnostics (rates, position
//! profiles, variance distributions, cross-model divergences, ablation
//! sweeps) are computed from the scored output.
//!
//! The pipeline stages communicate through line-delimited JSON files:
//!
//! 1. [`sampler`] collects [`trace::GenerationSet`]s from a backend.
//! 2. [`detector`] turns them into [`trace::ScoredGeneration`]s.
//! 3. [`analytics`] aggregates scored files into report and CSV data.
//!
//! [`cli`] wires the stages together behind the `tokvar` binary.

pub mod analytics;
pub mod cli;
pub mod detector;
pub mod sampler;
pub mod trace;

pub use detector::{score_corpus, score_generation_set, DetectorConfig, VarianceDenominator};
pub use trace::{
    DecodingConfig, GenerationSample, GenerationSet, PromptRecord, ScoredGeneration, TokenScore,
};
