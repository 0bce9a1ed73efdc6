//! Fixture loaders shared by the benchmarks.

use std::path::PathBuf;

use rgf_core::corpus::Corpus;
use rgf_core::{jsonl, Example, Passage};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

pub fn toy_corpus() -> Corpus {
    Corpus::from_passages(jsonl::read(fixture("toy_corpus.jsonl")).expect("toy corpus")).expect("unique ids")
}

pub fn toy_examples() -> Vec<Example> {
    jsonl::read(fixture("toy_examples.jsonl")).expect("toy examples")
}

/// Deterministic filler corpus of `n` passages for retrieval timing.
pub fn synthetic_corpus(n: usize) -> Corpus {
    const WORDS: [&str; 12] = [
        "club", "captain", "season", "final", "coach", "team", "goal", "ground", "league", "player", "match", "title",
    ];
    let passages = (0..n)
        .map(|i| {
            let body: Vec<&str> = (0..40).map(|j| WORDS[(i * 7 + j * j * 3 + j) % WORDS.len()]).collect();
            Passage::new(format!("s{i:06}"), "", body.join(" "))
        })
        .collect();
    Corpus::from_passages(passages).expect("unique ids")
}
