//! Samples one prompt from an OpenAI-compatible completions server.
//!
//! Reads `TOKVAR_BACKEND_URL` and `TOKVAR_MODEL` (and optionally
//! `TOKVAR_API_KEY`); does nothing when the URL is unset.

use tokvar::sampler::{sample_generations, BackendConfig, HttpBackend};
use tokvar::trace::build_prompt;
use tokvar::{score_generation_set, DecodingConfig, DetectorConfig, PromptRecord};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let Ok(url) = std::env::var("TOKVAR_BACKEND_URL") else {
        println!("TOKVAR_BACKEND_URL is not set; skipping");
        return Ok(());
    };
    let model = std::env::var("TOKVAR_MODEL").unwrap_or_else(|_| "default".into());
    let mut cfg = BackendConfig::new(url, model);
    cfg.api_key = std::env::var("TOKVAR_API_KEY").ok();
    let backend = HttpBackend::new(cfg)?;

    let record: PromptRecord = serde_json::from_str(
        r#"{"id":"t1","dataset":"triviaqa_nocontext","question":"Who wrote Hamlet?","gold_answer":"Shakespeare"}"#,
    )?;
    let prompt = build_prompt(&record, 300);
    let set = sample_generations(
        &record.id,
        &prompt,
        &DecodingConfig {
            seed: Some(1),
            ..Default::default()
        },
        &backend,
    )?;
    let scored = score_generation_set(&set, &DetectorConfig::default())?;
    println!("answer: {}", scored.answer_text);
    for t in &scored.token_scores {
        println!(
            "{:>3} {:<15} var {:?}{}",
            t.position,
            t.token,
            t.variance,
            if t.hallucinated { "  <-- flagged" } else { "" }
        );
    }
    Ok(())
}
