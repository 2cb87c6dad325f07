//! Sweeps the threshold, the number of samples and the answer length bucket
//! over one mock corpus.

use tokvar::analytics::{ablation_sweep, AblationAxis};
use tokvar::sampler::{mock_generate, MockModelSpec, PlantedRegion};
use tokvar::{DecodingConfig, DetectorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let traces: Vec<_> = (0..30u64)
        .map(|i| {
            let spec = MockModelSpec {
                seed: 9,
                answer_length: 10 + (i as usize % 3) * 10,
                stable_noise_sd: 0.2,
                planted_regions: vec![PlantedRegion {
                    start: 2,
                    end: 6,
                    noise_sd: 1.0,
                }],
                ..Default::default()
            };
            let cfg = DecodingConfig {
                num_samples: 6,
                seed: Some(i),
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
    let base = DetectorConfig::default();
    let sweeps = [
        (AblationAxis::Threshold, vec![0.0, 0.1, 0.25, 0.5, 1.0]),
        (AblationAxis::NumSamples, vec![1.0, 2.0, 3.0, 6.0, 8.0]),
        (AblationAxis::LengthBucket, vec![0.0, 15.0, 25.0, 100.0]),
    ];
    for (axis, values) in sweeps {
        let grid = ablation_sweep(&traces, axis, &values, &base)?;
        println!("{axis:?}");
        for p in &grid.points {
            println!(
                "  {:>6}: {:>7} ({} tokens)",
                p.value,
                p.summary.display_percent(),
                p.summary.scored_tokens
            );
        }
        for e in &grid.errors {
            println!("  {:>6}: rejected, {}", e.value, e.message);
        }
    }
    Ok(())
}
