#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const WORDS: &[&str] = &[
    "tax", "schools", "growth", "safety", "freedom", "jobs", "health", "costs", "children", "crime", "privacy",
    "energy", "markets", "families", "trade", "rights", "wages", "prices", "housing", "climate", "science",
    "voters", "police", "doctors", "farmers", "students", "workers", "banks", "cities", "borders", "courts",
    "reduces", "increases", "harms", "protects", "undermines", "improves", "threatens", "supports", "limits",
    "encourages", "because", "since", "while", "often", "rarely", "clearly", "many", "most", "few",
];

pub struct Fixture {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub test_topics: Vec<String>,
}

fn topic_text(i: usize) -> String {
    format!("We should subsidize item{i}")
}

fn jsonl(rows: impl IntoIterator<Item = serde_json::Value>) -> String {
    rows.into_iter().fold(String::new(), |mut s, r| {
        let _ = writeln!(s, "{r}");
        s
    })
}

fn claim(rng: &mut ChaCha8Rng, topic: usize) -> String {
    let n = rng.gen_range(4..9);
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    format!("item{topic} {}", words.join(" "))
}

/// Writes topics, claims, judgments, a claim corpus, an external evaluation
/// set and a config into `dir`. Train topics are `t*`, test topics `x*`.
pub fn write_fixture(dir: &Path, n_train: usize, n_test: usize) -> Fixture {
    fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut topics = Vec::new();
    let mut claims = Vec::new();
    for i in 0..n_train {
        let id = format!("t{i:03}");
        topics.push(json!({"id": id, "text": topic_text(i), "split": "train"}));
        for _ in 0..6 {
            let q = if rng.gen_bool(0.8) { 0.95 } else { 0.4 };
            claims.push(json!({"topic_id": id, "text": claim(&mut rng, i), "quality_score": q, "source": "rank30k"}));
        }
    }
    let mut test_topics = Vec::new();
    let mut corpus = Vec::new();
    for i in 0..n_test {
        let id = format!("x{i:03}");
        let idx = 1000 + i;
        topics.push(json!({"id": id, "text": topic_text(idx), "split": "test"}));
        for j in 0..4 {
            corpus.push(json!({"id": format!("{id}:c{j}"), "topic_id": id, "text": claim(&mut rng, idx)}));
        }
        test_topics.push(id);
    }

    // judgments for the first generated texts of each test topic
    let mut judgments = Vec::new();
    for topic in &test_topics {
        for k in 0..12 {
            let item = format!("{topic}-{k:04}");
            for a in 0..6 {
                let annotator = format!("a{a}");
                let plausible = rng.gen_bool(0.6);
                judgments.push(json!({"annotator_id": annotator, "item_id": item, "task": "plausibility", "value": plausible}));
                let stance = ["pro", "con", "none"][rng.gen_range(0..3)];
                judgments.push(json!({"annotator_id": annotator, "item_id": item, "task": "stance", "value": stance}));
            }
        }
    }
    for a in 0..7 {
        let annotator = format!("a{a}");
        for q in 0..5 {
            // annotator a6 fails every test question
            let right = a != 6;
            judgments.push(json!({"annotator_id": annotator, "item_id": format!("gold{q}"), "task": "plausibility",
                "value": right, "is_test_question": true, "gold_value": true}));
            judgments.push(json!({"annotator_id": annotator, "item_id": format!("gold{q}"), "task": "stance",
                "value": if right { "pro" } else { "con" }, "is_test_question": true, "gold_value": "pro"}));
        }
    }
    for p in 0..9 {
        for a in 0..7 {
            let v = ["generated", "corpus", "tie"][(p + a) % 3];
            judgments.push(json!({"annotator_id": format!("a{a}"), "item_id": format!("pair{p}"), "task": "preference", "value": v}));
        }
    }

    let mut training = Vec::new();
    for i in 0..40 {
        let (label, verb) = if i % 2 == 0 { (true, "improves") } else { (false, "harms") };
        let text = format!("item{i} clearly {verb} {}", WORDS[i % 30]);
        training.push(json!({"kind": "stance", "topic": topic_text(i), "text": text, "label": label}));
    }

    let mut external = String::from("topic,claim\n");
    for i in 0..n_train.min(12) {
        for _ in 0..3 {
            let _ = writeln!(external, "subsidizing item{i},{}", claim(&mut rng, i));
        }
    }

    fs::write(dir.join("topics.jsonl"), jsonl(topics)).unwrap();
    fs::write(dir.join("claims.jsonl"), jsonl(claims)).unwrap();
    fs::write(dir.join("corpus.jsonl"), jsonl(corpus)).unwrap();
    fs::write(dir.join("judgments.jsonl"), jsonl(judgments)).unwrap();
    fs::write(dir.join("external.csv"), external).unwrap();
    fs::write(dir.join("scorer_training.jsonl"), jsonl(training)).unwrap();
    let config = dir.join("run.toml");
    fs::write(
        &config,
        r#"out_dir = "run"

[paths]
topics = "topics.jsonl"
claims = "claims.jsonl"
corpus = "corpus.jsonl"
judgments = "judgments.jsonl"
external_claims = "external.csv"
scorer_training = "scorer_training.jsonl"

[model]
backend = "toy"
id = "toy-fixture"
finetune_steps = 400

[scorers]
cd = "lexical"
quality = "lexical"
stance = "logistic"

[kappa]
min_common = 10
min_partners = 2

[evaluation]
n_samples = 3
sample_size = 10
"#,
    )
    .unwrap();
    Fixture {
        dir: dir.to_path_buf(),
        config,
        test_topics,
    }
}

pub fn claimgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_claimgen"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

pub const PIPELINE: &[&str] = &["prepare", "finetune", "generate", "rank", "evaluate", "aggregate", "novelty", "report"];

/// Runs every subcommand in order, panicking on the first failure.
pub fn run_all(config: &Path, extra: &[&str]) {
    for cmd in PIPELINE {
        let mut args = vec![*cmd, "--config", config.to_str().unwrap()];
        args.extend_from_slice(extra);
        let out = claimgen(&args);
        assert!(
            out.status.success(),
            "{cmd} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
