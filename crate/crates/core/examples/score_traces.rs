//! Scores mock generation sets and lists the flagged tokens per prompt.
//!
//! Pass a threshold as the first argument to override the default of 0.5.

use tokvar::sampler::{mock_generate, MockModelSpec, PlantedRegion};
use tokvar::{score_corpus, DecodingConfig, DetectorConfig, VarianceDenominator};

fn main() {
    let tau: f64 = std::env::args()
        .nth(1)
        .map_or(0.5, |s| s.parse().expect("threshold must be a number"));
    let spec = MockModelSpec {
        seed: 3,
        answer_length: 20,
        stable_noise_sd: 0.1,
        planted_regions: vec![PlantedRegion {
            start: 12,
            end: 15,
            noise_sd: 2.0,
        }],
        ..Default::default()
    };
    let traces: Vec<_> = (0..4)
        .map(|i| {
            let cfg = DecodingConfig {
                num_samples: 5,
                seed: Some(100 + i),
                ..Default::default()
            };
            mock_generate(
                &format!("q{i}"),
                &format!("prompt {i}"),
                &cfg,
                &spec,
                "mock",
            )
        })
        .collect();

    for denom in [
        VarianceDenominator::PopulationN,
        VarianceDenominator::SampleNMinus1,
    ] {
        let cfg = DetectorConfig {
            variance_denominator: denom,
            ..DetectorConfig::with_threshold(tau)
        };
        let out = score_corpus(&traces, &cfg);
        println!("denominator {denom:?}, threshold {tau}");
        for s in &out.scored {
            let flagged: Vec<String> = s
                .token_scores
                .iter()
                .filter(|t| t.hallucinated)
                .map(|t| {
                    format!(
                        "{}@{} ({:.2})",
                        t.token,
                        t.position,
                        t.variance.unwrap_or(0.0)
                    )
                })
                .collect();
            println!(
                "  {}: {}/{} flagged  {}",
                s.prompt_id,
                s.hallucinated_count,
                s.scored_count,
                flagged.join(", ")
            );
        }
    }
}
