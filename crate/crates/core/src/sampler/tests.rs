use super::*;
use crate::detector::{position_stats, score_generation_set, DetectorConfig, VarianceDenominator};
use crate::trace::{read_traces, Dataset, PromptRecord};
use std::sync::atomic::AtomicUsize;
use std::sync::Mutex as StdMutex;

fn planted(sd: f64, start: usize, end: usize) -> MockModelSpec {
    MockModelSpec {
        seed: 11,
        answer_length: 30,
        base_logprob: -8.0,
        stable_noise_sd: 0.0,
        planted_regions: vec![PlantedRegion {
            start,
            end,
            noise_sd: sd,
        }],
        ..Default::default()
    }
}

fn seeded(n: usize, seed: u64) -> DecodingConfig {
    DecodingConfig {
        num_samples: n,
        seed: Some(seed),
        ..Default::default()
    }
}

#[test]
fn cardinality_against_mock() {
    let backend = MockBackend::new(MockModelSpec::default(), "mock");
    let set = sample_generations("q1", "prompt", &seeded(3, 1), &backend).unwrap();
    assert_eq!(set.samples.len(), 3);
    assert!(set.samples.iter().all(|s| s.len() == 40));
    assert_eq!(set.model_id, "mock");
    set.validate().unwrap();
}

#[test]
fn determinism_and_equivalence_with_mock_generate() {
    let spec = planted(1.0, 2, 5);
    let backend = MockBackend::new(spec.clone(), "mock");
    let cfg = seeded(5, 42);
    let a = sample_generations("q", "Who?", &cfg, &backend).unwrap();
    let b = sample_generations("q", "Who?", &cfg, &backend).unwrap();
    let c = mock_generate("q", "Who?", &cfg, &spec, "mock");
    assert_eq!(a, b);
    assert_eq!(a, c);
    let bits = |s: &GenerationSet| -> Vec<u64> {
        s.samples
            .iter()
            .flat_map(|x| x.logprobs.iter().map(|v| v.to_bits()))
            .collect()
    };
    assert_eq!(bits(&a), bits(&c));

    // Same positions carry the same token in every sample.
    for t in 0..a.samples[0].len() {
        assert!(a
            .samples
            .iter()
            .all(|s| s.tokens[t] == a.samples[0].tokens[t]));
    }
    // Different seed or prompt changes the draw.
    assert_ne!(mock_generate("q", "Who?", &seeded(5, 43), &spec, "mock"), c);
    assert_ne!(
        mock_generate("q", "What?", &cfg, &spec, "mock").samples[0].logprobs,
        c.samples[0].logprobs
    );
}

#[test]
fn zero_noise_gives_zero_variance() {
    let spec = MockModelSpec {
        stable_noise_sd: 0.0,
        ..Default::default()
    };
    let set = mock_generate("q", "p", &seeded(4, 3), &spec, "m");
    let scored = score_generation_set(&set, &DetectorConfig::with_threshold(1e-12)).unwrap();
    assert!(scored.token_scores.iter().all(|t| t.variance == Some(0.0)));
    assert_eq!(scored.hallucinated_count, 0);
}

#[test]
fn planted_region_variance_matches_noise() {
    // s^2 (n-1 denominator) of 50 normal draws with sd 1: (49 s^2) ~ chi2_49,
    // so s^2 lies in [0.3127, 2.2681] with probability 1 - 2e-6.
    let spec = MockModelSpec {
        answer_length: 40,
        ..planted(1.0, 10, 20)
    };
    let set = mock_generate("q", "prompt", &seeded(50, 5), &spec, "m");
    let mut pooled = 0.0;
    for t in 10..=20 {
        let col: Vec<f64> = set.samples.iter().map(|s| s.logprobs[t]).collect();
        let (_, v) = position_stats(&col, VarianceDenominator::SampleNMinus1).unwrap();
        assert!((0.3127..=2.2681).contains(&v), "position {t}: {v}");
        pooled += v / 11.0;
    }
    assert!((pooled - 1.0).abs() < 0.25, "pooled {pooled}");
    for t in (0..10).chain(21..40) {
        let col: Vec<f64> = set.samples.iter().map(|s| s.logprobs[t]).collect();
        assert_eq!(
            position_stats(&col, VarianceDenominator::PopulationN)
                .unwrap()
                .1,
            0.0
        );
    }
}

#[test]
fn stable_noise_rarely_flags() {
    // P(Var > 0.5) for 3 draws with sd 0.1 is P(chi2_2 > 150) = e^-75; a
    // 1e5-trial Monte-Carlo run flags nothing.
    let spec = MockModelSpec {
        stable_noise_sd: 0.1,
        base_logprob: -5.0,
        ..Default::default()
    };
    let mut flagged = 0;
    let mut total = 0;
    for i in 0..200 {
        let set = mock_generate(
            &format!("q{i}"),
            &format!("prompt {i}"),
            &seeded(3, i),
            &spec,
            "m",
        );
        let s = score_generation_set(&set, &DetectorConfig::default()).unwrap();
        flagged += s.hallucinated_count;
        total += s.scored_count;
    }
    assert_eq!(total, 200 * 40);
    assert!((flagged as f64 / total as f64) < 1e-3);
}

#[test]
fn spec_validation() {
    assert!(MockModelSpec::default().validate().is_ok());
    let mut s = planted(1.0, 10, 20);
    s.planted_regions.push(PlantedRegion {
        start: 20,
        end: 22,
        noise_sd: 2.0,
    });
    assert!(s.validate().unwrap_err().contains("overlap"));
    let s = planted(1.0, 10, 30);
    assert!(s.validate().is_err());
    let mut s = planted(0.5, 1, 2);
    s.stable_noise_sd = 0.5;
    assert!(s.validate().is_err());
    assert_eq!(planted(1.0, 10, 20).noise_sd_at(20), 1.0);
    assert_eq!(planted(1.0, 10, 20).noise_sd_at(21), 0.0);
}

struct NoLogprobs;

impl Backend for NoLogprobs {
    fn model_id(&self) -> &str {
        "nolp"
    }
    fn complete(&self, _: &CompletionRequest) -> Result<Completion, BackendError> {
        Ok(Completion {
            tokens: vec!["a".into()],
            logprobs: None,
            finish_reason: FinishReason::Stop,
        })
    }
}

#[test]
fn missing_logprobs_is_capability_error() {
    let err = sample_generations("q", "p", &seeded(3, 0), &NoLogprobs).unwrap_err();
    assert!(matches!(err, SamplerError::Capability(_)), "{err}");
}

/// Counts in-flight calls and fails each slot a configurable number of times.
struct Flaky {
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    calls: StdMutex<Vec<usize>>,
    fail_first: usize,
    status: u16,
    concurrency: usize,
    retries: usize,
}

impl Flaky {
    fn new(fail_first: usize, status: u16, concurrency: usize, retries: usize) -> Self {
        Self {
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            calls: StdMutex::new(Vec::new()),
            fail_first,
            status,
            concurrency,
            retries,
        }
    }
}

impl Backend for Flaky {
    fn model_id(&self) -> &str {
        "flaky"
    }
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(std::time::Duration::from_millis(5));
        let attempts = {
            let mut calls = self.calls.lock().unwrap();
            calls.push(req.sample_index);
            calls.iter().filter(|&&i| i == req.sample_index).count()
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        if attempts <= self.fail_first {
            return Err(BackendError::Status {
                status: self.status,
                body: "busy".into(),
            });
        }
        Ok(Completion {
            tokens: vec![format!("s{}", req.sample_index)],
            logprobs: Some(vec![-(req.sample_index as f64)]),
            finish_reason: FinishReason::Stop,
        })
    }
    fn max_concurrency(&self) -> usize {
        self.concurrency
    }
    fn max_retries(&self) -> usize {
        self.retries
    }
}

#[test]
fn concurrency_is_bounded() {
    for limit in [1, 2, 3] {
        let b = Flaky::new(0, 500, limit, 0);
        let set = sample_generations("q", "p", &seeded(8, 0), &b).unwrap();
        assert!(b.peak.load(Ordering::SeqCst) <= limit);
        let order: Vec<_> = set.samples.iter().map(|s| s.sample_index).collect();
        assert_eq!(order, (0..8).collect::<Vec<_>>());
    }
}

#[test]
fn retries_refill_only_failed_slots() {
    let b = Flaky::new(2, 503, 3, 2);
    let set = sample_generations("q", "p", &seeded(4, 0), &b).unwrap();
    assert_eq!(set.samples.len(), 4);
    for (i, s) in set.samples.iter().enumerate() {
        assert_eq!(s.tokens, vec![format!("s{i}")]);
    }
    assert_eq!(b.calls.lock().unwrap().len(), 12);
}

#[test]
fn exhausted_retries_report_partial_count() {
    let b = Flaky::new(1, 503, 2, 0);
    match sample_generations("q", "p", &seeded(3, 0), &b).unwrap_err() {
        SamplerError::Partial {
            succeeded,
            requested,
            ..
        } => {
            assert_eq!((succeeded, requested), (0, 3));
        }
        e => panic!("{e}"),
    }
    // 4xx is never retried.
    let b = Flaky::new(1, 400, 1, 5);
    assert!(sample_generations("q", "p", &seeded(2, 0), &b).is_err());
    assert_eq!(b.calls.lock().unwrap().len(), 2);
}

#[test]
fn seeds_are_stable_and_distinct() {
    assert_eq!(mix_seed(1, 2), mix_seed(1, 2));
    assert_ne!(mix_seed(1, 2), mix_seed(2, 1));
    let seeds: std::collections::HashSet<_> = (0..1000).map(|i| sample_seed(7, i)).collect();
    assert_eq!(seeds.len(), 1000);
}

/// Fails every request whose prompt mentions `marker`.
struct FailOn {
    inner: MockBackend,
    marker: &'static str,
}

impl Backend for FailOn {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        if req.prompt.contains(self.marker) {
            return Err(BackendError::Status {
                status: 500,
                body: "injected".into(),
            });
        }
        self.inner.complete(req)
    }
}

fn prompts(n: usize) -> Vec<PromptRecord> {
    (0..n)
        .map(|i| PromptRecord {
            id: format!("q{i}"),
            dataset: Dataset::Custom,
            context: format!("context {i}"),
            question: format!("question {i}?"),
            gold_answer: None,
        })
        .collect()
}

#[test]
fn run_is_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traces.jsonl");
    let opts = RunOptions::for_trace(&out);
    let backend = MockBackend::new(MockModelSpec::default(), "mock");
    let cfg = seeded(3, 9);
    let s = run_sampling(&prompts(10), &cfg, &backend, &out, &opts).unwrap();
    assert_eq!(
        s,
        RunSummary {
            written: 10,
            skipped: 0,
            failed: 0
        }
    );
    let before = std::fs::read(&out).unwrap();
    let s = run_sampling(&prompts(10), &cfg, &backend, &out, &opts).unwrap();
    assert_eq!(
        s,
        RunSummary {
            written: 0,
            skipped: 10,
            failed: 0
        }
    );
    assert_eq!(std::fs::read(&out).unwrap(), before);

    // Extending the corpus leaves earlier prompts untouched.
    run_sampling(&prompts(12), &cfg, &backend, &out, &opts).unwrap();
    let traces = read_traces(&out).unwrap();
    assert_eq!(traces.len(), 12);
    let fresh = dir.path().join("fresh.jsonl");
    run_sampling(
        &prompts(12),
        &cfg,
        &backend,
        &fresh,
        &RunOptions::for_trace(&fresh),
    )
    .unwrap();
    assert_eq!(read_traces(&fresh).unwrap(), traces);
}

#[test]
fn failing_prompt_goes_to_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traces.jsonl");
    let opts = RunOptions::for_trace(&out);
    let backend = FailOn {
        inner: MockBackend::new(MockModelSpec::default(), "mock"),
        marker: "question 4?",
    };
    let s = run_sampling(&prompts(10), &seeded(3, 1), &backend, &out, &opts).unwrap();
    assert_eq!(
        s,
        RunSummary {
            written: 9,
            skipped: 0,
            failed: 1
        }
    );
    assert_eq!(read_traces(&out).unwrap().len(), 9);
    let side = std::fs::read_to_string(&opts.error_path).unwrap();
    let recs: Vec<ErrorRecord> = side
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].prompt_id, "q4");
    assert_eq!(recs[0].stage, "sample");
    assert!(recs[0].message.contains("0 of 3"));
}
