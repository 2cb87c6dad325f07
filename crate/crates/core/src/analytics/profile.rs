use serde::{Deserialize, Serialize};

use super::{single_model_id, AnalyticsError, Result};
use crate::trace::ScoredGeneration;

/// Positions reported by default.
pub const DEFAULT_MAX_POSITION: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionStat {
    pub position: usize,
    /// Scored tokens observed at this position.
    pub support_count: usize,
    pub flagged_count: usize,
    /// `None` when `support_count == 0`.
    pub flag_probability: Option<f64>,
    pub mean_variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionProfile {
    pub model_id: String,
    pub max_position: usize,
    pub positions: Vec<PositionStat>,
}

/// Scored variances grouped by token position, in input order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PositionVariances {
    pub model_id: String,
    pub by_position: Vec<Vec<f64>>,
}

pub fn position_variances(
    scored: &[ScoredGeneration],
    max_position: usize,
) -> Result<PositionVariances> {
    let model_id = single_model_id(scored)?.to_string();
    let mut by_position = vec![Vec::new(); max_position];
    for g in scored {
        for s in g.token_scores.iter().filter(|s| s.position < max_position) {
            if let Some(v) = s.variance {
                by_position[s.position].push(v);
            }
        }
    }
    Ok(PositionVariances {
        model_id,
        by_position,
    })
}

/// Per-position flag probability and mean variance for `t < max_position`.
pub fn position_profile(
    scored: &[ScoredGeneration],
    max_position: usize,
) -> Result<PositionProfile> {
    if max_position == 0 {
        return Err(AnalyticsError::Invalid("max_position must be >= 1".into()));
    }
    let model_id = single_model_id(scored)?.to_string();
    let mut support = vec![0usize; max_position];
    let mut flagged = vec![0usize; max_position];
    let mut sums = vec![0.0f64; max_position];
    for g in scored {
        for s in g.token_scores.iter().filter(|s| s.position < max_position) {
            if let Some(v) = s.variance {
                support[s.position] += 1;
                sums[s.position] += v;
                flagged[s.position] += usize::from(s.hallucinated);
            }
        }
    }
    let positions = (0..max_position)
        .map(|t| {
            let n = support[t];
            PositionStat {
                position: t,
                support_count: n,
                flagged_count: flagged[t],
                flag_probability: (n > 0).then(|| flagged[t] as f64 / n as f64),
                mean_variance: (n > 0).then(|| sums[t] / n as f64),
            }
        })
        .collect();
    Ok(PositionProfile {
        model_id,
        max_position,
        positions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::test_support::scored;

    #[test]
    fn all_flagged_gives_probability_one() {
        let recs = vec![
            scored("m", "a", 0.5, &[Some(0.9), Some(1.0)]),
            scored("m", "b", 0.5, &[Some(0.7)]),
        ];
        let p = position_profile(&recs, 4).unwrap();
        assert_eq!(p.positions.len(), 4);
        assert_eq!(p.positions[0].flag_probability, Some(1.0));
        assert_eq!(p.positions[1].flag_probability, Some(1.0));
        assert_eq!(p.positions[0].support_count, 2);
        assert!((p.positions[0].mean_variance.unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(p.positions[2].support_count, 0);
        assert_eq!(p.positions[2].flag_probability, None);
    }

    #[test]
    fn unscored_positions_do_not_count() {
        let recs = vec![scored("m", "a", 0.5, &[Some(0.0), None, Some(0.6)])];
        let p = position_profile(&recs, 2).unwrap();
        assert_eq!(p.positions[0].mean_variance, Some(0.0));
        assert_eq!(p.positions[1].support_count, 0);
        let v = position_variances(&recs, 3).unwrap();
        assert_eq!(v.by_position, vec![vec![0.0], vec![], vec![0.6]]);
    }

    #[test]
    fn zero_cap_rejected() {
        let recs = vec![scored("m", "a", 0.5, &[Some(0.0)])];
        assert!(position_profile(&recs, 0).is_err());
    }
}
