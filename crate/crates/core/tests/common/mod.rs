#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Output;

use tokvar::sampler::{MockModelSpec, PlantedRegion};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_tokvar")
}

pub fn tokvar(args: &[&str]) -> Output {
    std::process::Command::new(bin())
        .args(args)
        .env_remove("TOKVAR_API_KEY")
        .env_remove("TOKVAR_SEED")
        .env_remove("TOKVAR_THRESHOLD")
        .output()
        .expect("binary runs")
}

pub fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn write_corpus(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("corpus.jsonl");
    let lines: Vec<String> = (0..n)
        .map(|i| {
            serde_json::json!({
                "id": format!("q{i}"),
                "dataset": "squad_v2",
                "context": format!("Context passage number {i}. ").repeat(20),
                "question": format!("What happened in passage {i}?"),
                "gold_answer": "",
            })
            .to_string()
        })
        .collect();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

pub fn planted_spec(seed: u64, stable: f64, planted: Option<f64>) -> MockModelSpec {
    MockModelSpec {
        seed,
        answer_length: 40,
        base_logprob: -8.0,
        stable_noise_sd: stable,
        planted_regions: planted
            .map(|sd| PlantedRegion {
                start: 10,
                end: 20,
                noise_sd: sd,
            })
            .into_iter()
            .collect(),
        ..Default::default()
    }
}

pub fn write_spec(dir: &Path, name: &str, spec: &MockModelSpec) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(spec).unwrap()).unwrap();
    path
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn line_count(p: &Path) -> usize {
    std::fs::read_to_string(p).unwrap().lines().count()
}
