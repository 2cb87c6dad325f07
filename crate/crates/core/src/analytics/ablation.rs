use serde::{Deserialize, Serialize};

use super::{hallucination_rate, AnalyticsError, RateSummary, Result};
use crate::detector::{apply_threshold, score_corpus, DetectorConfig};
use crate::trace::{GenerationSet, ScoredGeneration};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    /// Re-threshold stored variances.
    Threshold,
    /// Rescore with only the first `k` samples of every set.
    NumSamples,
    /// Split generations by scored length; values are bucket lower bounds.
    LengthBucket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub value: f64,
    pub summary: RateSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationValueError {
    pub value: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub axis: AblationAxis,
    pub points: Vec<AblationPoint>,
    pub errors: Vec<AblationValueError>,
    /// Sets that could not be scored under the base config.
    pub skipped_sets: usize,
}

fn as_count(value: f64) -> Option<usize> {
    (value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64).then_some(value as usize)
}

fn rate_of(model_id: &str, scored: &[ScoredGeneration]) -> RateSummary {
    if scored.is_empty() {
        RateSummary::from_counts(model_id, 0, 0, 0)
    } else {
        hallucination_rate(scored).expect("records share one model id")
    }
}

/// Sweeps one parameter over `values` and reports the rate at each value.
///
/// Out-of-range values become entries in `errors`; the remaining values are
/// still evaluated.
pub fn ablation_sweep(
    traces: &[GenerationSet],
    axis: AblationAxis,
    values: &[f64],
    base: &DetectorConfig,
) -> Result<AblationGrid> {
    base.validate()
        .map_err(|e| AnalyticsError::Invalid(e.to_string()))?;
    let first = traces.first().ok_or(AnalyticsError::Empty)?;
    if let Some(other) = traces.iter().find(|t| t.model_id != first.model_id) {
        return Err(AnalyticsError::MixedModels(
            first.model_id.clone(),
            other.model_id.clone(),
        ));
    }
    if values.is_empty() {
        return Err(AnalyticsError::Invalid("no sweep values given".into()));
    }
    if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalyticsError::Invalid(
            "sweep values must be finite and strictly increasing".into(),
        ));
    }
    let model_id = first.model_id.as_str();
    let base_scores = score_corpus(traces, base);
    let mut grid = AblationGrid {
        axis,
        points: Vec::new(),
        errors: Vec::new(),
        skipped_sets: base_scores.failures.len(),
    };
    let mut reject = |value: f64, message: String| {
        grid.errors.push(AblationValueError { value, message });
    };
    let mut points = Vec::new();

    match axis {
        AblationAxis::Threshold => {
            for &tau in values {
                if tau < 0.0 {
                    reject(tau, format!("threshold {tau} is negative"));
                    continue;
                }
                let rescored: Vec<_> = base_scores
                    .scored
                    .iter()
                    .map(|s| apply_threshold(s, tau))
                    .collect();
                points.push(AblationPoint {
                    value: tau,
                    summary: rate_of(model_id, &rescored),
                });
            }
        }
        AblationAxis::NumSamples => {
            let available = traces.iter().map(|t| t.samples.len()).min().unwrap_or(0);
            for &value in values {
                let Some(k) = as_count(value) else {
                    reject(value, format!("num_samples {value} is not a whole number"));
                    continue;
                };
                if k < 2 {
                    reject(
                        value,
                        format!("num_samples {k} rejected: variance needs at least 2 samples"),
                    );
                    continue;
                }
                if k > available {
                    reject(
                        value,
                        format!("num_samples {k} exceeds the {available} samples available in every set"),
                    );
                    continue;
                }
                let truncated: Vec<GenerationSet> = traces
                    .iter()
                    .map(|t| {
                        let mut t = t.clone();
                        t.samples.truncate(k);
                        if t.reference_index >= k {
                            t.reference_index = 0;
                        }
                        t
                    })
                    .collect();
                let scores = score_corpus(&truncated, base);
                if let Some(f) = scores.failures.first() {
                    reject(value, format!("{}: {}", f.prompt_id, f.error));
                    continue;
                }
                points.push(AblationPoint {
                    value,
                    summary: rate_of(model_id, &scores.scored),
                });
            }
        }
        AblationAxis::LengthBucket => {
            let mut bounds = Vec::new();
            for &value in values {
                match as_count(value) {
                    Some(b) => bounds.push((value, b)),
                    None => reject(value, format!("bucket bound {value} is not a whole number")),
                }
            }
            for (i, &(value, lo)) in bounds.iter().enumerate() {
                let hi = bounds.get(i + 1).map_or(usize::MAX, |b| b.1);
                let bucket: Vec<_> = base_scores
                    .scored
                    .iter()
                    .filter(|s| (lo..hi).contains(&s.scored_count))
                    .cloned()
                    .collect();
                points.push(AblationPoint {
                    value,
                    summary: rate_of(model_id, &bucket),
                });
            }
        }
    }
    grid.points = points;
    Ok(grid)
}
