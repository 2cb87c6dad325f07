//! Samples a planted-noise mock model and prints the per-sample log-probs
//! around the planted region.

use tokvar::sampler::{sample_generations, MockBackend, MockModelSpec, PlantedRegion};
use tokvar::DecodingConfig;

fn main() {
    let spec = MockModelSpec {
        seed: 7,
        answer_length: 16,
        stable_noise_sd: 0.05,
        planted_regions: vec![PlantedRegion {
            start: 6,
            end: 9,
            noise_sd: 1.5,
        }],
        ..Default::default()
    };
    let backend = MockBackend::new(spec, "mock-planted");
    let config = DecodingConfig {
        num_samples: 5,
        seed: Some(42),
        ..Default::default()
    };
    let set = sample_generations("demo", "\n\nQ: What is a mock?\nA:", &config, &backend)
        .expect("mock sampling cannot fail for a valid spec");

    println!("reference answer: {}", set.reference().tokens.join(" "));
    println!("pos  token        log-probs per sample");
    for pos in 0..set.reference().tokens.len() {
        let lps: Vec<String> = set
            .samples
            .iter()
            .map(|s| format!("{:7.3}", s.logprobs[pos]))
            .collect();
        let marker = if (6..=9).contains(&pos) { "*" } else { " " };
        println!(
            "{pos:>3}{marker} {:<12} {}",
            set.reference().tokens[pos],
            lps.join(" ")
        );
    }
}
