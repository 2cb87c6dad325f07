use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::manifest::{now_ms, text_digest, BackendIdentity, RunManifest, MANIFEST_FILE};
use super::{AblateArgs, AnalyzeArgs, CliError, Command, CompareArgs, SampleArgs, ScoreArgs};
use crate::analytics::export::{self, AnalysisReport};
use crate::analytics::{
    ablation_sweep, compare_models, hallucination_rate, heatmap_matrix, position_profile,
    shared_edges, variance_distribution, DEFAULT_KL_EPSILON,
};
use crate::detector::score_corpus;
use crate::sampler::{
    run_sampling, Backend, BackendConfig, ErrorRecord, HttpBackend, MockBackend, MockModelSpec,
    RunOptions,
};
use crate::trace::{
    read_prompts, read_scored, read_traces, write_lines_atomic, write_scored, DecodingConfig,
    ScoredGeneration,
};

pub const TRACE_FILE: &str = "traces.jsonl";
pub const SAMPLE_ERRORS_FILE: &str = "errors.jsonl";
pub const SCORED_FILE: &str = "scored.jsonl";
pub const SCORE_ERRORS_FILE: &str = "score_errors.jsonl";
pub const REPORT_FILE: &str = "report.json";

pub(super) fn dispatch(command: Command, command_line: Vec<String>) -> Result<(), CliError> {
    let (name, out) = match &command {
        Command::Sample(a) => ("sample", &a.out),
        Command::Score(a) => ("score", &a.out),
        Command::Analyze(a) => ("analyze", &a.out),
        Command::Compare(a) => ("compare", &a.out),
        Command::Ablate(a) => ("ablate", &a.out),
    };
    let out = out.clone();
    let mut manifest = RunManifest::new(name);
    manifest.command_line = command_line;
    match command {
        Command::Sample(a) => sample(a, &mut manifest)?,
        Command::Score(a) => score(a, &mut manifest)?,
        Command::Analyze(a) => analyze(a, &mut manifest)?,
        Command::Compare(a) => compare(a, &mut manifest)?,
        Command::Ablate(a) => ablate(a, &mut manifest)?,
    }
    manifest.finished_unix_ms = now_ms();
    export::write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::internal(format!("cannot create {}: {e}", dir.display())))
}

fn add_input(manifest: &mut RunManifest, path: &Path) -> Result<(), CliError> {
    manifest
        .add_input(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn sample(a: SampleArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let config = DecodingConfig {
        temperature: a.temperature,
        top_p: a.top_p,
        top_k: a.top_k,
        max_new_tokens: a.max_new_tokens,
        num_samples: a.num_samples,
        seed: a.seed,
    };
    config.validate()?;
    if a.max_concurrency == 0 {
        return Err(CliError::config("--max-concurrency must be >= 1"));
    }

    let backend: Box<dyn Backend> = if a.mock {
        let spec = match &a.mock_spec {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
                serde_json::from_str::<MockModelSpec>(&text)
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
            }
            None => MockModelSpec::default(),
        };
        spec.validate().map_err(CliError::config)?;
        let model_id = a.model.clone().unwrap_or_else(|| "mock".to_string());
        manifest.backend = Some(BackendIdentity {
            url_sha256: "mock".into(),
            model_id: model_id.clone(),
            mock_spec_sha256: Some(text_digest(
                &serde_json::to_string(&spec).expect("spec serializes"),
            )),
        });
        let mut b = MockBackend::new(spec, model_id);
        b.max_concurrency = a.max_concurrency;
        Box::new(b)
    } else {
        let url = a
            .backend_url
            .clone()
            .ok_or_else(|| CliError::config("--backend-url is required without --mock"))?;
        let model_id = a
            .model
            .clone()
            .ok_or_else(|| CliError::config("--model is required without --mock"))?;
        let api_key = std::env::var(&a.api_key_env).map_err(|_| {
            CliError::config(format!(
                "API key environment variable {} is not set",
                a.api_key_env
            ))
        })?;
        let mut cfg = BackendConfig::new(&url, &model_id);
        cfg.api_key = Some(api_key);
        cfg.request_timeout = Duration::from_secs(a.timeout_secs);
        cfg.max_retries = a.max_retries;
        cfg.max_concurrency = a.max_concurrency;
        cfg.supports_top_k = !a.no_top_k;
        manifest.backend = Some(BackendIdentity {
            url_sha256: text_digest(&url),
            model_id,
            mock_spec_sha256: None,
        });
        Box::new(HttpBackend::new(cfg).map_err(|e| CliError::config(e.to_string()))?)
    };

    let prompts = read_prompts(&a.corpus, a.adapter)?;
    add_input(manifest, &a.corpus)?;
    manifest.decoding = Some(config.clone());
    manifest.run_seed = a.seed;

    ensure_dir(&a.out)?;
    let trace_path = a.out.join(TRACE_FILE);
    let opts = RunOptions {
        context_limit: a.context_limit,
        error_path: a.out.join(SAMPLE_ERRORS_FILE),
    };
    let summary = run_sampling(&prompts, &config, backend.as_ref(), &trace_path, &opts)?;
    log::info!(
        "sampled {} prompts ({} already present, {} failed)",
        summary.written,
        summary.skipped,
        summary.failed
    );
    if summary.failed > 0 && summary.written == 0 && summary.skipped == 0 {
        return Err(CliError::backend(format!(
            "all {} prompts failed; see {}",
            summary.failed,
            opts.error_path.display()
        )));
    }
    Ok(())
}

fn score(a: ScoreArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let cfg = a.detector.config();
    cfg.validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    let traces = read_traces(&a.trace)?;
    add_input(manifest, &a.trace)?;
    manifest.detector = Some(cfg.clone());

    let result = score_corpus(&traces, &cfg);
    ensure_dir(&a.out)?;
    write_scored(&result.scored, &a.out.join(SCORED_FILE))?;
    let errors_path = a.out.join(SCORE_ERRORS_FILE);
    if result.failures.is_empty() {
        let _ = fs::remove_file(&errors_path);
    } else {
        for f in &result.failures {
            log::warn!("{}: {}", f.prompt_id, f.error);
        }
        write_lines_atomic(
            &errors_path,
            result.failures.iter().map(|f| {
                serde_json::to_string(&ErrorRecord {
                    prompt_id: f.prompt_id.clone(),
                    stage: "score".into(),
                    message: f.error.to_string(),
                })
                .expect("error record serializes")
            }),
        )?;
    }
    Ok(())
}

/// Splits records by model id, keeping first-appearance order.
fn group_by_model(scored: Vec<ScoredGeneration>) -> Vec<(String, Vec<ScoredGeneration>)> {
    let mut groups: Vec<(String, Vec<ScoredGeneration>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for s in scored {
        let i = *index.entry(s.model_id.clone()).or_insert_with(|| {
            groups.push((s.model_id.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[i].1.push(s);
    }
    groups
}

fn analyze(a: AnalyzeArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let mut groups = Vec::new();
    let mut heat_rows = Vec::new();
    for path in &a.scored {
        let scored = read_scored(path)?;
        add_input(manifest, path)?;
        if scored.is_empty() {
            return Err(CliError::input(format!(
                "{} has no scored records",
                path.display()
            )));
        }
        if let Some(id) = &a.heatmap_prompt {
            let hits: Vec<_> = scored
                .iter()
                .filter(|s| &s.prompt_id == id)
                .cloned()
                .collect();
            if hits.is_empty() {
                return Err(CliError::input(format!(
                    "prompt {id:?} for --heatmap-prompt is absent from {}",
                    path.display()
                )));
            }
            heat_rows.extend(hits);
        }
        groups.extend(group_by_model(scored));
    }

    let corpora: Vec<&[ScoredGeneration]> = groups.iter().map(|(_, g)| g.as_slice()).collect();
    let edges = shared_edges(&corpora, a.bins)?;
    let mut report = AnalysisReport {
        threshold: None,
        rates: Vec::new(),
        position_profiles: Vec::new(),
        distributions: Vec::new(),
        heatmap: None,
    };
    let thresholds: Vec<f64> = groups
        .iter()
        .flat_map(|(_, g)| g.iter().map(|s| s.threshold))
        .collect();
    if thresholds.windows(2).all(|w| w[0] == w[1]) {
        report.threshold = thresholds.first().copied();
    }
    for (_, g) in &groups {
        report.rates.push(hallucination_rate(g)?);
        report
            .position_profiles
            .push(position_profile(g, a.max_position)?);
        report.distributions.push(variance_distribution(g, &edges)?);
    }
    if !heat_rows.is_empty() {
        let refs: Vec<&ScoredGeneration> = heat_rows.iter().collect();
        report.heatmap = Some(heatmap_matrix(&refs)?);
    }

    ensure_dir(&a.out)?;
    let out = |name: &str| -> PathBuf { a.out.join(name) };
    export::write_rates_csv(&out("rates.csv"), &report.rates)?;
    export::write_profile_csv(&out("position_profile.csv"), &report.position_profiles)?;
    export::write_histogram_csv(&out("histogram.csv"), &report.distributions)?;
    export::write_cdf_csv(&out("cdf.csv"), &report.distributions)?;
    if let Some(h) = &report.heatmap {
        export::write_heatmap_csv(&out("heatmap.csv"), h)?;
    }
    export::write_json(&out(REPORT_FILE), &report)?;
    Ok(())
}

fn compare(a: CompareArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let sa = read_scored(&a.scored_a)?;
    let sb = read_scored(&a.scored_b)?;
    add_input(manifest, &a.scored_a)?;
    add_input(manifest, &a.scored_b)?;
    for (path, s) in [(&a.scored_a, &sa), (&a.scored_b, &sb)] {
        if s.is_empty() {
            return Err(CliError::input(format!(
                "{} has no scored records",
                path.display()
            )));
        }
    }
    let cmp = compare_models(&sa, &sb, a.bins, a.max_position, DEFAULT_KL_EPSILON)?;
    for w in &cmp.warnings {
        eprintln!("warning: {w}");
    }
    ensure_dir(&a.out)?;
    export::write_kl_csv(&a.out.join("kl.csv"), &cmp)?;
    export::write_mean_diff_csv(&a.out.join("mean_diff.csv"), &cmp)?;
    export::write_json(&a.out.join("comparison.json"), &cmp)?;
    Ok(())
}

fn ablate(a: AblateArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let cfg = a.detector.config();
    cfg.validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    let traces = read_traces(&a.trace)?;
    add_input(manifest, &a.trace)?;
    manifest.detector = Some(cfg.clone());
    let grid = ablation_sweep(&traces, a.axis, &a.values, &cfg)?;
    for e in &grid.errors {
        eprintln!("warning: value {} rejected: {}", e.value, e.message);
    }
    ensure_dir(&a.out)?;
    export::write_ablation_csv(&a.out.join("ablation.csv"), &grid)?;
    export::write_json(&a.out.join("ablation.json"), &grid)?;
    if grid.points.is_empty() {
        return Err(CliError::config(format!(
            "every sweep value was rejected: {}",
            grid.errors
                .iter()
                .map(|e| e.message.as_str())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    Ok(())
}
