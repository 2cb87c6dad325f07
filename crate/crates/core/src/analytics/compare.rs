use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{
    kl_divergence, position_profile, position_variances, shared_edges, single_model_id,
    uniform_edges, variance_distribution, AnalyticsError, KlDivergence, PositionProfile,
    PositionVariances, Result, VarianceDistribution,
};
use crate::trace::ScoredGeneration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionComparison {
    pub position: usize,
    pub support_a: usize,
    pub support_b: usize,
    pub mean_variance_a: f64,
    pub mean_variance_b: f64,
    pub kl_ab: f64,
    pub kl_ba: f64,
    pub kl_sym: f64,
    pub abs_mean_variance_diff: f64,
}

/// Position-by-position divergence between two models' variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub model_a: String,
    pub model_b: String,
    /// Only positions where both models have scored tokens.
    pub positions: Vec<PositionComparison>,
    /// KL over the whole variance distributions, when both are nonempty.
    pub overall: Option<KlDivergence>,
    pub warnings: Vec<String>,
}

fn per_position_dist(
    model_id: &str,
    values: &[f64],
    edges: &[f64],
) -> Result<VarianceDistribution> {
    Ok(VarianceDistribution {
        model_id: model_id.to_string(),
        bin_edges: edges.to_vec(),
        bin_counts: super::histogram(values.iter().copied(), edges)?,
        cdf_points: Vec::new(),
    })
}

/// Compares two models at every co-supported position.
///
/// Each position gets its own `bins` uniform edges over `[0, max variance
/// of either model at that position]`.
pub fn positionwise_comparison(
    a: &PositionProfile,
    b: &PositionProfile,
    variances_a: &PositionVariances,
    variances_b: &PositionVariances,
    bins: usize,
    epsilon: f64,
) -> Result<ModelComparison> {
    let len = a
        .positions
        .len()
        .min(b.positions.len())
        .min(variances_a.by_position.len())
        .min(variances_b.by_position.len());
    let mut positions = Vec::new();
    for t in 0..len {
        let (pa, pb) = (&a.positions[t], &b.positions[t]);
        let (Some(ma), Some(mb)) = (pa.mean_variance, pb.mean_variance) else {
            continue;
        };
        let (xa, xb) = (&variances_a.by_position[t], &variances_b.by_position[t]);
        let max = xa.iter().chain(xb).copied().fold(0.0, f64::max);
        let edges = uniform_edges(max, bins)?;
        let kl = kl_divergence(
            &per_position_dist(&a.model_id, xa, &edges)?,
            &per_position_dist(&b.model_id, xb, &edges)?,
            epsilon,
        )?;
        positions.push(PositionComparison {
            position: t,
            support_a: pa.support_count,
            support_b: pb.support_count,
            mean_variance_a: ma,
            mean_variance_b: mb,
            kl_ab: kl.kl_pq,
            kl_ba: kl.kl_qp,
            kl_sym: kl.kl_sym,
            abs_mean_variance_diff: (ma - mb).abs(),
        });
    }
    let mut warnings = Vec::new();
    if positions.is_empty() {
        warnings.push(format!(
            "{} and {} share no supported positions; comparison is empty",
            a.model_id, b.model_id
        ));
    }
    Ok(ModelComparison {
        model_a: a.model_id.clone(),
        model_b: b.model_id.clone(),
        positions,
        overall: None,
        warnings,
    })
}

/// Restricts both runs to their shared prompt ids, then compares them per
/// position and over the whole variance distribution.
pub fn compare_models(
    a: &[ScoredGeneration],
    b: &[ScoredGeneration],
    bins: usize,
    max_position: usize,
    epsilon: f64,
) -> Result<ModelComparison> {
    let model_a = single_model_id(a)?.to_string();
    let model_b = single_model_id(b)?.to_string();
    let ids_a: HashSet<&str> = a.iter().map(|s| s.prompt_id.as_str()).collect();
    let ids_b: HashSet<&str> = b.iter().map(|s| s.prompt_id.as_str()).collect();
    let a: Vec<ScoredGeneration> = a
        .iter()
        .filter(|s| ids_b.contains(s.prompt_id.as_str()))
        .cloned()
        .collect();
    let b: Vec<ScoredGeneration> = b
        .iter()
        .filter(|s| ids_a.contains(s.prompt_id.as_str()))
        .cloned()
        .collect();
    if a.is_empty() {
        let warning = format!(
            "{model_a} and {model_b} were scored on disjoint prompt sets; comparison is empty"
        );
        log::warn!("{warning}");
        return Ok(ModelComparison {
            model_a,
            model_b,
            positions: Vec::new(),
            overall: None,
            warnings: vec![warning],
        });
    }
    let mut cmp = positionwise_comparison(
        &position_profile(&a, max_position)?,
        &position_profile(&b, max_position)?,
        &position_variances(&a, max_position)?,
        &position_variances(&b, max_position)?,
        bins,
        epsilon,
    )?;
    let edges = shared_edges(&[&a, &b], bins)?;
    let (da, db) = (
        variance_distribution(&a, &edges)?,
        variance_distribution(&b, &edges)?,
    );
    if da.total() > 0 && db.total() > 0 {
        cmp.overall = Some(kl_divergence(&da, &db, epsilon)?);
    }
    for w in &cmp.warnings {
        log::warn!("{w}");
    }
    Ok(cmp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub model_id: String,
    /// Reference tokens; `None` past this model's length.
    pub tokens: Vec<Option<String>>,
    /// `None` past this model's length or where the position is unscored.
    pub variances: Vec<Option<f64>>,
}

/// Model-by-position variance matrix for one shared prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub prompt_id: String,
    pub width: usize,
    pub rows: Vec<HeatmapRow>,
}

pub fn heatmap_matrix(generations: &[&ScoredGeneration]) -> Result<Heatmap> {
    let first = generations.first().ok_or(AnalyticsError::Empty)?;
    if let Some(other) = generations.iter().find(|g| g.prompt_id != first.prompt_id) {
        return Err(AnalyticsError::PromptMismatch(
            first.prompt_id.clone(),
            other.prompt_id.clone(),
        ));
    }
    let width = generations
        .iter()
        .map(|g| g.total_tokens())
        .max()
        .unwrap_or(0);
    let rows = generations
        .iter()
        .map(|g| {
            let mut tokens: Vec<Option<String>> = g
                .token_scores
                .iter()
                .map(|s| Some(s.token.clone()))
                .collect();
            let mut variances: Vec<Option<f64>> =
                g.token_scores.iter().map(|s| s.variance).collect();
            tokens.resize(width, None);
            variances.resize(width, None);
            HeatmapRow {
                model_id: g.model_id.clone(),
                tokens,
                variances,
            }
        })
        .collect();
    Ok(Heatmap {
        prompt_id: first.prompt_id.clone(),
        width,
        rows,
    })
}
