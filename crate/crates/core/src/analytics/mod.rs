//! Corpus-level diagnostics over scored generations.
//!
//! All aggregates take immutable inputs and reduce in input order, so the
//! same records always produce the same bits.

mod ablation;
mod compare;
mod distribution;
pub mod export;
mod profile;
mod rate;

use thiserror::Error;

use crate::trace::TraceError;

pub use ablation::{ablation_sweep, AblationAxis, AblationGrid, AblationPoint, AblationValueError};
pub use compare::{
    compare_models, heatmap_matrix, positionwise_comparison, Heatmap, HeatmapRow, ModelComparison,
    PositionComparison,
};
pub use distribution::{
    histogram, kl_divergence, shared_edges, uniform_edges, variance_distribution, KlDivergence,
    VarianceDistribution, DEFAULT_BINS, DEFAULT_KL_EPSILON,
};
pub use profile::{
    position_profile, position_variances, PositionProfile, PositionStat, PositionVariances,
    DEFAULT_MAX_POSITION,
};
pub use rate::{format_percent, hallucination_rate, RateSummary};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("no scored records")]
    Empty,
    #[error("records mix model ids {0:?} and {1:?}")]
    MixedModels(String, String),
    #[error("histograms use different bin edges")]
    EdgeMismatch,
    #[error("distribution for {0:?} has no scored tokens")]
    EmptyDistribution(String),
    #[error("heatmap inputs reference different prompts ({0:?} vs {1:?})")]
    PromptMismatch(String, String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] TraceError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = AnalyticsError> = std::result::Result<T, E>;

/// The model id shared by every record.
pub(crate) fn single_model_id(scored: &[crate::trace::ScoredGeneration]) -> Result<&str> {
    let first = scored.first().ok_or(AnalyticsError::Empty)?;
    if let Some(other) = scored.iter().find(|s| s.model_id != first.model_id) {
        return Err(AnalyticsError::MixedModels(
            first.model_id.clone(),
            other.model_id.clone(),
        ));
    }
    Ok(&first.model_id)
}
