//! Compares a calm mock model against a noisy one position by position.

use tokvar::analytics::{compare_models, heatmap_matrix, DEFAULT_BINS, DEFAULT_KL_EPSILON};
use tokvar::sampler::{mock_generate, MockModelSpec, PlantedRegion};
use tokvar::{score_corpus, DecodingConfig, DetectorConfig, ScoredGeneration};

fn run(model: &str, planted_sd: Option<f64>) -> Vec<ScoredGeneration> {
    let spec = MockModelSpec {
        seed: 5,
        answer_length: 12,
        stable_noise_sd: 0.1,
        planted_regions: planted_sd
            .map(|sd| {
                vec![PlantedRegion {
                    start: 4,
                    end: 7,
                    noise_sd: sd,
                }]
            })
            .unwrap_or_default(),
        ..Default::default()
    };
    let traces: Vec<_> = (0..40)
        .map(|i| {
            let cfg = DecodingConfig {
                seed: Some(i),
                ..Default::default()
            };
            mock_generate(&format!("q{i}"), &format!("prompt {i}"), &cfg, &spec, model)
        })
        .collect();
    score_corpus(&traces, &DetectorConfig::default()).scored
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let calm = run("calm", None);
    let noisy = run("noisy", Some(1.5));
    let cmp = compare_models(&calm, &noisy, DEFAULT_BINS, 12, DEFAULT_KL_EPSILON)?;

    println!("pos  mean var calm  mean var noisy  sym KL");
    for p in &cmp.positions {
        println!(
            "{:>3}  {:>13.4}  {:>14.4}  {:>6.3}",
            p.position, p.mean_variance_a, p.mean_variance_b, p.kl_sym
        );
    }
    if let Some(kl) = cmp.overall {
        println!(
            "overall: KL(calm||noisy) {:.3}, KL(noisy||calm) {:.3}",
            kl.kl_pq, kl.kl_qp
        );
    }

    let heat = heatmap_matrix(&[&calm[0], &noisy[0]])?;
    for row in &heat.rows {
        let cells: Vec<String> = row
            .variances
            .iter()
            .map(|v| v.map_or("  -  ".into(), |v| format!("{v:5.2}")))
            .collect();
        println!("{:>6} {}", row.model_id, cells.join(" "));
    }
    Ok(())
}
