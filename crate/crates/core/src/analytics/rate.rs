use serde::{Deserialize, Serialize};

use super::{single_model_id, Result};
use crate::trace::ScoredGeneration;

/// Token counts and the hallucination rate of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub model_id: String,
    pub total_tokens: usize,
    pub scored_tokens: usize,
    pub hallucinated_tokens: usize,
    /// `100 * hallucinated / scored`; 0 when nothing was scored.
    pub rate_percent: f64,
}

impl RateSummary {
    pub fn from_counts(
        model_id: impl Into<String>,
        total_tokens: usize,
        scored_tokens: usize,
        hallucinated_tokens: usize,
    ) -> Self {
        debug_assert!(hallucinated_tokens <= scored_tokens && scored_tokens <= total_tokens);
        let rate_percent = if scored_tokens == 0 {
            0.0
        } else {
            100.0 * hallucinated_tokens as f64 / scored_tokens as f64
        };
        Self {
            model_id: model_id.into(),
            total_tokens,
            scored_tokens,
            hallucinated_tokens,
            rate_percent,
        }
    }

    /// Rate rounded to two decimals, e.g. `72.42%`.
    pub fn display_percent(&self) -> String {
        format_percent(self.hallucinated_tokens as u64, self.scored_tokens as u64)
    }
}

/// Formats `100 * numerator / denominator` with two decimals, rounding
/// half to even on the exact rational value.
pub fn format_percent(numerator: u64, denominator: u64) -> String {
    if denominator == 0 {
        return "0.00%".to_string();
    }
    let scaled = 10_000u128 * numerator as u128;
    let d = denominator as u128;
    let (mut q, r) = (scaled / d, scaled % d);
    if 2 * r > d || (2 * r == d && q % 2 == 1) {
        q += 1;
    }
    format!("{}.{:02}%", q / 100, q % 100)
}

pub fn hallucination_rate(scored: &[ScoredGeneration]) -> Result<RateSummary> {
    let model_id = single_model_id(scored)?;
    let (total, counted, flagged) = scored.iter().fold((0, 0, 0), |(t, s, h), g| {
        (
            t + g.total_tokens(),
            s + g.scored_count,
            h + g.hallucinated_count,
        )
    });
    Ok(RateSummary::from_counts(model_id, total, counted, flagged))
}
