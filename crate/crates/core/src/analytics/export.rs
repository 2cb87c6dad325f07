//! Plot-ready CSV files and the combined JSON report.
//!
//! Missing values are written as `NA`. Floats use the shortest
//! representation that round-trips, so identical inputs give identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    AblationGrid, Heatmap, ModelComparison, PositionProfile, RateSummary, Result,
    VarianceDistribution,
};
use crate::trace::write_bytes_atomic;

pub const NA: &str = "NA";

/// Everything `analyze` computes for a set of scored files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub threshold: Option<f64>,
    pub rates: Vec<RateSummary>,
    pub position_profiles: Vec<PositionProfile>,
    pub distributions: Vec<VarianceDistribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<Heatmap>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

fn write_csv<F>(path: &Path, header: &[&str], fill: F) -> Result<()>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    fill(&mut w)?;
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    write_bytes_atomic(path, &bytes)?;
    Ok(())
}

pub fn write_rates_csv(path: &Path, rates: &[RateSummary]) -> Result<()> {
    write_csv(
        path,
        &[
            "model_id",
            "total_tokens",
            "scored_tokens",
            "hallucinated_tokens",
            "rate_percent",
            "rate_display",
        ],
        |w| {
            for r in rates {
                w.write_record([
                    r.model_id.clone(),
                    r.total_tokens.to_string(),
                    r.scored_tokens.to_string(),
                    r.hallucinated_tokens.to_string(),
                    r.rate_percent.to_string(),
                    r.display_percent(),
                ])?;
            }
            Ok(())
        },
    )
}

pub fn write_profile_csv(path: &Path, profiles: &[PositionProfile]) -> Result<()> {
    write_csv(
        path,
        &[
            "model_id",
            "position",
            "support_count",
            "flagged_count",
            "flag_probability",
            "mean_variance",
        ],
        |w| {
            for p in profiles {
                for s in &p.positions {
                    w.write_record([
                        p.model_id.clone(),
                        s.position.to_string(),
                        s.support_count.to_string(),
                        s.flagged_count.to_string(),
                        opt(s.flag_probability),
                        opt(s.mean_variance),
                    ])?;
                }
            }
            Ok(())
        },
    )
}

pub fn write_histogram_csv(path: &Path, dists: &[VarianceDistribution]) -> Result<()> {
    write_csv(path, &["model_id", "bin", "lower", "upper", "count"], |w| {
        for d in dists {
            for (i, c) in d.bin_counts.iter().enumerate() {
                w.write_record([
                    d.model_id.clone(),
                    i.to_string(),
                    d.bin_edges[i].to_string(),
                    d.bin_edges[i + 1].to_string(),
                    c.to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

pub fn write_cdf_csv(path: &Path, dists: &[VarianceDistribution]) -> Result<()> {
    write_csv(
        path,
        &["model_id", "variance", "cumulative_fraction"],
        |w| {
            for d in dists {
                for (x, f) in &d.cdf_points {
                    w.write_record([d.model_id.clone(), x.to_string(), f.to_string()])?;
                }
            }
            Ok(())
        },
    )
}

/// Long format: one row per (model, position).
pub fn write_heatmap_csv(path: &Path, heatmap: &Heatmap) -> Result<()> {
    write_csv(
        path,
        &["prompt_id", "model_id", "position", "token", "variance"],
        |w| {
            for row in &heatmap.rows {
                for t in 0..heatmap.width {
                    w.write_record([
                        heatmap.prompt_id.clone(),
                        row.model_id.clone(),
                        t.to_string(),
                        row.tokens[t].clone().unwrap_or_else(|| NA.to_string()),
                        opt(row.variances[t]),
                    ])?;
                }
            }
            Ok(())
        },
    )
}

/// Per-position KL rows followed by one `all` row for the whole distribution.
pub fn write_kl_csv(path: &Path, cmp: &ModelComparison) -> Result<()> {
    write_csv(
        path,
        &["model_a", "model_b", "position", "kl_ab", "kl_ba", "kl_sym"],
        |w| {
            for p in &cmp.positions {
                w.write_record([
                    cmp.model_a.clone(),
                    cmp.model_b.clone(),
                    p.position.to_string(),
                    p.kl_ab.to_string(),
                    p.kl_ba.to_string(),
                    p.kl_sym.to_string(),
                ])?;
            }
            if let Some(k) = &cmp.overall {
                w.write_record([
                    cmp.model_a.clone(),
                    cmp.model_b.clone(),
                    "all".to_string(),
                    k.kl_pq.to_string(),
                    k.kl_qp.to_string(),
                    k.kl_sym.to_string(),
                ])?;
            }
            Ok(())
        },
    )
}

pub fn write_mean_diff_csv(path: &Path, cmp: &ModelComparison) -> Result<()> {
    write_csv(
        path,
        &[
            "model_a",
            "model_b",
            "position",
            "mean_variance_a",
            "mean_variance_b",
            "abs_mean_variance_diff",
        ],
        |w| {
            for p in &cmp.positions {
                w.write_record([
                    cmp.model_a.clone(),
                    cmp.model_b.clone(),
                    p.position.to_string(),
                    p.mean_variance_a.to_string(),
                    p.mean_variance_b.to_string(),
                    p.abs_mean_variance_diff.to_string(),
                ])?;
            }
            Ok(())
        },
    )
}

pub fn write_ablation_csv(path: &Path, grid: &AblationGrid) -> Result<()> {
    let axis = serde_json::to_value(grid.axis)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    write_csv(
        path,
        &[
            "axis",
            "value",
            "model_id",
            "total_tokens",
            "scored_tokens",
            "hallucinated_tokens",
            "rate_percent",
            "rate_display",
            "error",
        ],
        |w| {
            for p in &grid.points {
                let r = &p.summary;
                w.write_record([
                    axis.clone(),
                    p.value.to_string(),
                    r.model_id.clone(),
                    r.total_tokens.to_string(),
                    r.scored_tokens.to_string(),
                    r.hallucinated_tokens.to_string(),
                    r.rate_percent.to_string(),
                    r.display_percent(),
                    String::new(),
                ])?;
            }
            for e in &grid.errors {
                let mut row = vec![axis.clone(), e.value.to_string()];
                row.extend(std::iter::repeat_n(NA.to_string(), 6));
                row.push(e.message.clone());
                w.write_record(row)?;
            }
            Ok(())
        },
    )
}

/// Pretty-printed JSON, newline terminated.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialize");
    bytes.push(b'\n');
    write_bytes_atomic(path, &bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{heatmap_matrix, test_support::scored};

    #[test]
    fn heatmap_marks_missing() {
        let dir = tempfile::tempdir().unwrap();
        let a = scored("a", "p", 0.5, &[Some(0.25), None]);
        let mut b = scored("b", "p", 0.5, &[Some(0.0)]);
        b.token_scores[0].token = "x,\"y\"".into();
        let h = heatmap_matrix(&[&a, &b]).unwrap();
        let path = dir.path().join("h.csv");
        write_heatmap_csv(&path, &h).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "prompt_id,model_id,position,token,variance\np,a,0,t0,0.25\np,a,1,t1,NA\np,b,0,\"x,\"\"y\"\"\",0\np,b,1,NA,NA\n"
        );
    }

    #[test]
    fn rates_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_rates_csv(
            &path,
            &[RateSummary::from_counts("GPT-Neo 125M", 4000, 4000, 2897)],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(
            text.ends_with("GPT-Neo 125M,4000,4000,2897,72.425,72.42%\n"),
            "{text}"
        );
    }
}
