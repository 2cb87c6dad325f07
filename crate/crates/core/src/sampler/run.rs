use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{mix_seed, sample_generations, Backend};
use crate::trace::{
    append_trace, build_prompt, read_traces, DecodingConfig, PromptRecord, TraceError,
    DEFAULT_CONTEXT_LIMIT,
};

/// One line of the error sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub prompt_id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub context_limit: usize,
    pub error_path: PathBuf,
}

impl RunOptions {
    /// Sidecar next to the trace file: `<trace>.errors.jsonl`.
    pub fn for_trace(out_path: &Path) -> Self {
        let mut name = out_path.as_os_str().to_owned();
        name.push(".errors.jsonl");
        Self {
            context_limit: DEFAULT_CONTEXT_LIMIT,
            error_path: PathBuf::from(name),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub written: usize,
    pub skipped: usize,
    pub failed: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TraceError + '_ {
    move |source| TraceError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Samples every prompt not yet present in `out_path` and appends one trace
/// line per prompt.
///
/// The prompt at corpus index `i` is sampled with seed
/// `mix_seed(run_seed, i)`, which is what its stored config records. Failed
/// prompts go to the error sidecar and the batch continues.
pub fn run_sampling(
    prompts: &[PromptRecord],
    config: &DecodingConfig,
    backend: &dyn Backend,
    out_path: &Path,
    opts: &RunOptions,
) -> Result<RunSummary, TraceError> {
    config.validate()?;
    let done: HashSet<(String, String)> = if out_path.exists() {
        read_traces(out_path)?
            .into_iter()
            .map(|s| (s.prompt_id, s.model_id))
            .collect()
    } else {
        HashSet::new()
    };

    let open_append = |path: &Path| {
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map(BufWriter::new)
            .map_err(io_err(path))
    };
    let mut out = open_append(out_path)?;
    let mut errors = None;
    let mut summary = RunSummary::default();

    for (index, record) in prompts.iter().enumerate() {
        if done.contains(&(record.id.clone(), backend.model_id().to_string())) {
            summary.skipped += 1;
            continue;
        }
        let prompt_config = DecodingConfig {
            seed: config.seed.map(|s| mix_seed(s, index as u64)),
            ..config.clone()
        };
        let prompt = build_prompt(record, opts.context_limit);
        match sample_generations(&record.id, &prompt, &prompt_config, backend) {
            Ok(set) => {
                append_trace(&mut out, &set).map_err(io_err(out_path))?;
                summary.written += 1;
            }
            Err(e) => {
                log::error!("prompt {}: {e}", record.id);
                if errors.is_none() {
                    errors = Some(open_append(&opts.error_path)?);
                }
                let w = errors.as_mut().expect("opened above");
                let line = serde_json::to_string(&ErrorRecord {
                    prompt_id: record.id.clone(),
                    stage: "sample".into(),
                    message: e.to_string(),
                })
                .expect("error record serializes");
                writeln!(w, "{line}")
                    .and_then(|_| w.flush())
                    .map_err(io_err(&opts.error_path))?;
                summary.failed += 1;
            }
        }
    }
    Ok(summary)
}
