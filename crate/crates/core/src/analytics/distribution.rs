use serde::{Deserialize, Serialize};

use super::{single_model_id, AnalyticsError, Result};
use crate::trace::ScoredGeneration;

pub const DEFAULT_BINS: usize = 50;
pub const DEFAULT_KL_EPSILON: f64 = 1e-9;

/// Histogram and empirical CDF of scored token variances.
///
/// Bin `i` covers `(edges[i], edges[i + 1]]`, with the first bin also closed
/// on the left, so `cdf_points[i]` is the exact empirical CDF at
/// `edges[i + 1]`. Values outside the edges are counted in the end bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceDistribution {
    pub model_id: String,
    pub bin_edges: Vec<f64>,
    pub bin_counts: Vec<u64>,
    /// `(upper edge, cumulative fraction)`; empty when nothing was scored.
    pub cdf_points: Vec<(f64, f64)>,
}

impl VarianceDistribution {
    pub fn total(&self) -> u64 {
        self.bin_counts.iter().sum()
    }

    /// Rebuilds the CDF from `bin_counts`.
    fn with_cdf(mut self) -> Self {
        let total = self.total();
        self.cdf_points = if total == 0 {
            Vec::new()
        } else {
            let mut acc = 0u64;
            self.bin_counts
                .iter()
                .zip(&self.bin_edges[1..])
                .map(|(c, e)| {
                    acc += c;
                    (*e, acc as f64 / total as f64)
                })
                .collect()
        };
        self
    }

    /// Elementwise sum of two histograms over the same edges.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if !same_edges(&self.bin_edges, &other.bin_edges) {
            return Err(AnalyticsError::EdgeMismatch);
        }
        Ok(Self {
            model_id: self.model_id.clone(),
            bin_edges: self.bin_edges.clone(),
            bin_counts: self
                .bin_counts
                .iter()
                .zip(&other.bin_counts)
                .map(|(a, b)| a + b)
                .collect(),
            cdf_points: Vec::new(),
        }
        .with_cdf())
    }
}

fn same_edges(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 3 {
        return Err(AnalyticsError::Invalid(format!(
            "need at least 2 bins ({} edges given)",
            edges.len()
        )));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalyticsError::Invalid(
            "bin edges must be finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// `bins` equal-width bins over `[0, max_value]`, or `[0, 1]` when
/// `max_value` is not positive.
pub fn uniform_edges(max_value: f64, bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(AnalyticsError::Invalid(format!(
            "bins must be >= 2, got {bins}"
        )));
    }
    let upper = if max_value > 0.0 && max_value.is_finite() {
        max_value
    } else {
        1.0
    };
    let mut edges: Vec<f64> = (0..=bins).map(|i| upper * i as f64 / bins as f64).collect();
    edges[bins] = upper;
    Ok(edges)
}

/// Uniform edges over `[0, largest scored variance in any corpus]`.
pub fn shared_edges(corpora: &[&[ScoredGeneration]], bins: usize) -> Result<Vec<f64>> {
    let max = corpora
        .iter()
        .flat_map(|c| c.iter())
        .flat_map(|g| g.token_scores.iter().filter_map(|s| s.variance))
        .fold(0.0f64, f64::max);
    uniform_edges(max, bins)
}

/// Counts `values` into the bins described by `edges`.
pub fn histogram(values: impl IntoIterator<Item = f64>, edges: &[f64]) -> Result<Vec<u64>> {
    check_edges(edges)?;
    let bins = edges.len() - 1;
    let mut counts = vec![0u64; bins];
    for v in values {
        let idx = edges[1..].partition_point(|e| *e < v).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(counts)
}

pub fn variance_distribution(
    scored: &[ScoredGeneration],
    edges: &[f64],
) -> Result<VarianceDistribution> {
    let model_id = single_model_id(scored)?.to_string();
    let values = scored
        .iter()
        .flat_map(|g| g.token_scores.iter().filter_map(|s| s.variance));
    Ok(VarianceDistribution {
        model_id,
        bin_edges: edges.to_vec(),
        bin_counts: histogram(values, edges)?,
        cdf_points: Vec::new(),
    }
    .with_cdf())
}

/// Both directions of the KL divergence and their mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlDivergence {
    pub kl_pq: f64,
    pub kl_qp: f64,
    pub kl_sym: f64,
}

fn smoothed(counts: &[u64], epsilon: f64) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    let norm = 1.0 + epsilon * counts.len() as f64;
    counts
        .iter()
        .map(|&c| (c as f64 / total as f64 + epsilon) / norm)
        .collect()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

/// KL divergence between two histograms over shared edges, after adding
/// `epsilon` to every normalized bin and renormalizing.
pub fn kl_divergence(
    p: &VarianceDistribution,
    q: &VarianceDistribution,
    epsilon: f64,
) -> Result<KlDivergence> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(AnalyticsError::Invalid(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    if !same_edges(&p.bin_edges, &q.bin_edges) {
        return Err(AnalyticsError::EdgeMismatch);
    }
    for d in [p, q] {
        if d.total() == 0 {
            return Err(AnalyticsError::EmptyDistribution(d.model_id.clone()));
        }
    }
    let ps = smoothed(&p.bin_counts, epsilon);
    let qs = smoothed(&q.bin_counts, epsilon);
    let kl_pq = kl(&ps, &qs);
    let kl_qp = kl(&qs, &ps);
    Ok(KlDivergence {
        kl_pq,
        kl_qp,
        kl_sym: (kl_pq + kl_qp) / 2.0,
    })
}
