//! Computes the rate, position profile and variance histogram for one mock
//! model and writes the CSV exports to a temporary directory.

use tokvar::analytics::{
    export, hallucination_rate, position_profile, uniform_edges, variance_distribution,
    DEFAULT_BINS, DEFAULT_MAX_POSITION,
};
use tokvar::sampler::{mock_generate, MockModelSpec, PlantedRegion};
use tokvar::{score_corpus, DecodingConfig, DetectorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = MockModelSpec {
        seed: 11,
        stable_noise_sd: 0.2,
        planted_regions: vec![PlantedRegion {
            start: 0,
            end: 5,
            noise_sd: 1.2,
        }],
        ..Default::default()
    };
    let traces: Vec<_> = (0..50)
        .map(|i| {
            let cfg = DecodingConfig {
                seed: Some(i),
                ..Default::default()
            };
            mock_generate(
                &format!("q{i}"),
                &format!("prompt {i}"),
                &cfg,
                &spec,
                "mock-early-noise",
            )
        })
        .collect();
    let scored = score_corpus(&traces, &DetectorConfig::default()).scored;

    let rate = hallucination_rate(&scored)?;
    println!(
        "{}: {} of {} tokens flagged = {}",
        rate.model_id,
        rate.hallucinated_tokens,
        rate.scored_tokens,
        rate.display_percent()
    );

    let profile = position_profile(&scored, DEFAULT_MAX_POSITION)?;
    println!("pos  P(flag)  mean variance");
    for p in profile.positions.iter().take(10) {
        println!(
            "{:>3}  {:>7.3}  {:>7.3}",
            p.position,
            p.flag_probability.unwrap_or(f64::NAN),
            p.mean_variance.unwrap_or(f64::NAN)
        );
    }

    let max = scored
        .iter()
        .flat_map(|s| &s.token_scores)
        .filter_map(|t| t.variance)
        .fold(0.0, f64::max);
    let dist = variance_distribution(&scored, &uniform_edges(max, DEFAULT_BINS)?)?;
    let median = dist
        .cdf_points
        .iter()
        .find(|(_, c)| *c >= 0.5)
        .map(|(x, _)| *x);
    println!("variance median bin edge: {median:?}");

    let dir = tempfile::tempdir()?;
    export::write_rates_csv(&dir.path().join("rates.csv"), &[rate])?;
    export::write_profile_csv(&dir.path().join("position_profile.csv"), &[profile])?;
    export::write_histogram_csv(&dir.path().join("histogram.csv"), &[dist])?;
    println!("\nposition_profile.csv head:");
    for line in std::fs::read_to_string(dir.path().join("position_profile.csv"))?
        .lines()
        .take(4)
    {
        println!("  {line}");
    }
    Ok(())
}
