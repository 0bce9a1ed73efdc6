//! Retrieve, generate, filter and select, end to end or one stage at a time.
//!
//! [`run_rgf`] and the single-stage entry points in [`stages`] share the
//! per-example functions below, so chaining stages reproduces a full run.

mod config;
mod export;
pub mod stages;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{build_decomposer, ContextStrategy, Gateway, GatewayConfig, GatewayMode, PipelineConfig};
pub use export::{export_augmented, AugmentedRecord, Provenance};

use crate::corpus::{sample_random_passage, InvertedIndex};
use crate::error::{Error, Result};
use crate::filters::{answer_mismatch_filter, round_trip_filter, select};
use crate::gateway::{extract_answer_candidates, generate_questions, read, GatewayError, GeneratorRequest};
use crate::seed::{sha256_hex, stable_hash};
use crate::text::tokenize_words;
use crate::types::{CandidateContext, Example, FilterVerdict, GeneratedTriple};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Record counts after each stage. Unset counts were not produced by the
/// stage that wrote the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageCounts {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub examples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_examples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieved: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mismatch_retained: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round_trip_passed: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<usize>,
}

/// Provenance of a run or stage. Contains nothing time-dependent, so equal
/// inputs give byte-identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub stage: String,
    pub config: PipelineConfig,
    /// Input name to SHA-256 of the file contents.
    pub inputs: BTreeMap<String, String>,
    pub counts: StageCounts,
}

impl RunManifest {
    pub fn new(stage: &str, config: &PipelineConfig, counts: StageCounts) -> Self {
        RunManifest {
            tool_version: TOOL_VERSION.to_string(),
            stage: stage.to_string(),
            config: config.clone(),
            inputs: BTreeMap::new(),
            counts,
        }
    }

    /// Records the checksum of an input file.
    pub fn add_input(&mut self, name: &str, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }
}

/// Candidate (context, answer) pairs for one example before mismatch filtering.
pub fn candidate_contexts(
    example: &Example,
    index: &InvertedIndex<'_>,
    gateway: &Gateway,
    config: &PipelineConfig,
) -> Result<Vec<CandidateContext>> {
    let from_extractor = |passage: &crate::types::Passage| {
        extract_answer_candidates(gateway.extractor.as_ref(), passage, config.answer_candidates)
            .into_iter()
            .enumerate()
            .map(|(i, answer)| CandidateContext {
                example_id: example.example_id.clone(),
                passage: passage.clone(),
                answer,
                retrieval_rank: i as u32 + 1,
            })
            .collect()
    };
    match config.context_strategy {
        ContextStrategy::Retrieved => {
            let reader = gateway
                .ensemble
                .readers()
                .first()
                .ok_or_else(|| Error::Config("empty reader ensemble".into()))?;
            let mut out = Vec::new();
            for hit in index.retrieve(&example.question, config.retrieval_k) {
                let response = read(reader.as_ref(), &example.question, hit.passage)?;
                if let Some(answer) = response.answer {
                    out.push(CandidateContext {
                        example_id: example.example_id.clone(),
                        passage: hit.passage.clone(),
                        answer,
                        retrieval_rank: hit.rank as u32,
                    });
                }
            }
            Ok(out)
        }
        ContextStrategy::Gold => Ok(from_extractor(&example.context)),
        ContextStrategy::Random => {
            let seed = stable_hash(config.seed, &[&example.example_id]);
            let passage = sample_random_passage(index.corpus(), seed)?;
            Ok(from_extractor(passage))
        }
    }
}

/// Candidates for one example with gold-matching answers removed, plus the
/// count before filtering.
pub fn retrieve_for_example(
    example: &Example,
    index: &InvertedIndex<'_>,
    gateway: &Gateway,
    config: &PipelineConfig,
) -> Result<(Vec<CandidateContext>, usize)> {
    let all = candidate_contexts(example, index, gateway, config)?;
    let before = all.len();
    Ok((answer_mismatch_filter(all, &example.gold_answers), before))
}

pub fn triple_id(example_id: &str, rank: u32, beam: u32) -> String {
    format!("{example_id}-r{rank}-b{beam}")
}

/// Generates questions for one example's candidates in order until
/// `overgenerate_target` distinct questions exist.
pub fn generate_for_example(
    candidates: &[CandidateContext],
    gateway: &Gateway,
    config: &PipelineConfig,
) -> Result<Vec<GeneratedTriple>, GatewayError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for c in candidates {
        if out.len() >= config.overgenerate_target {
            break;
        }
        let request = GeneratorRequest {
            context: &c.passage,
            answer: &c.answer,
            num_questions: config.beams,
        };
        let response = generate_questions(gateway.generator.as_ref(), &request)?;
        for (beam, q) in response.questions.into_iter().enumerate() {
            if out.len() >= config.overgenerate_target {
                break;
            }
            if !seen.insert(tokenize_words(&q.text).join(" ")) {
                continue;
            }
            let mut verdicts = BTreeMap::new();
            verdicts.insert(FilterVerdict::ANSWER_MISMATCH.to_string(), FilterVerdict::mismatch(true));
            out.push(GeneratedTriple {
                triple_id: triple_id(&c.example_id, c.retrieval_rank, beam as u32),
                source_example_id: c.example_id.clone(),
                question: q.text,
                context: c.passage.clone(),
                answer: c.answer.clone(),
                retrieval_rank: c.retrieval_rank,
                beam_index: beam as u32,
                generator_id: response.generator_id.clone(),
                verdicts,
            });
        }
    }
    Ok(out)
}

/// Attaches a round-trip verdict to each triple. Triples whose readers
/// fail are logged and left without a verdict, which counts as failing.
pub fn round_trip_all(triples: &mut [GeneratedTriple], gateway: &Gateway, config: &PipelineConfig) {
    for t in triples.iter_mut() {
        match round_trip_filter(t, &gateway.ensemble, config.round_trip_mode) {
            Ok(v) => {
                t.verdicts.insert(FilterVerdict::ROUND_TRIP.to_string(), v);
            }
            Err(e) => log::warn!("triple {}: round trip failed: {e}", t.triple_id),
        }
    }
}

/// Picks at most one round-trip survivor for `original`.
pub fn select_for_example(
    original: &Example,
    triples: &[GeneratedTriple],
    config: &PipelineConfig,
) -> Option<GeneratedTriple> {
    let survivors: Vec<GeneratedTriple> = triples
        .iter()
        .filter(|t| t.passed(FilterVerdict::ROUND_TRIP))
        .cloned()
        .collect();
    select(original, &survivors, config.effective_selection())
}

pub(crate) fn check_unique_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

pub(crate) fn sorted_by_id(examples: &[Example]) -> Vec<&Example> {
    let mut v: Vec<&Example> = examples.iter().collect();
    v.sort_by(|a, b| a.example_id.cmp(&b.example_id));
    v
}

#[derive(Debug, Default)]
struct ExampleOutcome {
    failed: bool,
    retrieved: usize,
    retained: usize,
    generated: usize,
    passed: usize,
    selected: Option<GeneratedTriple>,
}

fn run_example(example: &Example, index: &InvertedIndex<'_>, gateway: &Gateway, config: &PipelineConfig) -> ExampleOutcome {
    let (candidates, retrieved) = match retrieve_for_example(example, index, gateway, config) {
        Ok(v) => v,
        Err(e) => {
            log::warn!("example {}: retrieval failed: {e}", example.example_id);
            return ExampleOutcome {
                failed: true,
                ..Default::default()
            };
        }
    };
    let mut outcome = ExampleOutcome {
        retrieved,
        retained: candidates.len(),
        ..Default::default()
    };
    let mut triples = match generate_for_example(&candidates, gateway, config) {
        Ok(t) => t,
        Err(e) => {
            log::warn!("example {}: generation failed: {e}", example.example_id);
            outcome.failed = true;
            return outcome;
        }
    };
    outcome.generated = triples.len();
    round_trip_all(&mut triples, gateway, config);
    outcome.passed = triples.iter().filter(|t| t.passed(FilterVerdict::ROUND_TRIP)).count();
    outcome.selected = select_for_example(example, &triples, config);
    outcome
}

/// Runs every stage for every example. Examples are processed in parallel
/// on the current rayon pool; output is sorted by example id regardless
/// of scheduling. Failing examples are logged and skipped.
pub fn run_rgf(
    examples: &[Example],
    index: &InvertedIndex<'_>,
    gateway: &Gateway,
    config: &PipelineConfig,
) -> Result<(Vec<GeneratedTriple>, RunManifest)> {
    config.validate()?;
    check_unique_ids(examples.iter().map(|e| e.example_id.as_str()))?;
    let ordered = sorted_by_id(examples);
    let outcomes: Vec<ExampleOutcome> = ordered
        .par_iter()
        .map(|e| run_example(e, index, gateway, config))
        .collect();

    let mut counts = StageCounts {
        examples: Some(examples.len()),
        ..Default::default()
    };
    let sum = |f: fn(&ExampleOutcome) -> usize| Some(outcomes.iter().map(f).sum());
    counts.failed_examples = sum(|o| o.failed as usize);
    counts.retrieved = sum(|o| o.retrieved);
    counts.mismatch_retained = sum(|o| o.retained);
    counts.generated = sum(|o| o.generated);
    counts.round_trip_passed = sum(|o| o.passed);
    let selected: Vec<GeneratedTriple> = outcomes.into_iter().filter_map(|o| o.selected).collect();
    counts.selected = Some(selected.len());
    Ok((selected, RunManifest::new("run", config, counts)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_index, Corpus};
    use crate::filters::SelectionMode;
    use crate::text::{answers_match, question_distance};
    use crate::types::Passage;

    fn corpus() -> Corpus {
        Corpus::from_passages(vec![
            Passage::new(
                "p1",
                "Richmond",
                "Trent Cotchin is the captain of the Richmond Football Club. The club plays at the MCG.",
            ),
            Passage::new(
                "p2",
                "Richmond reserves",
                "Steve Morris is the captain of the Richmond reserves team.",
            ),
            Passage::new("p3", "Weather", "Rain fell over Geelong all week."),
        ])
        .unwrap()
    }

    fn example(c: &Corpus) -> Example {
        Example {
            example_id: "ex1".into(),
            question: "who is the captain of richmond".into(),
            context: c.get("p1").unwrap().clone(),
            gold_answers: vec!["Trent Cotchin".into()],
            gold_span: None,
        }
    }

    #[test]
    fn one_example_yields_one_mismatching_triple() {
        let c = corpus();
        let index = build_index(&c, Default::default());
        let config = PipelineConfig::default();
        let gateway = Gateway::from_config(&config).unwrap();
        let ex = example(&c);
        let (selected, manifest) = run_rgf(std::slice::from_ref(&ex), &index, &gateway, &config).unwrap();
        assert_eq!(selected.len(), 1);
        let t = &selected[0];
        assert_eq!(t.answer.surface, "Steve Morris");
        assert!(!answers_match(&t.answer.surface, &ex.gold_answers));
        assert!(t.passed(FilterVerdict::ROUND_TRIP));
        let d = question_distance(&ex.question, &t.question);
        assert!(d > 0);
        assert_eq!(t.verdicts[FilterVerdict::MINIMALITY].edit_distance, Some(d));
        let counts = manifest.counts;
        assert_eq!(counts.selected, Some(1));
        assert!(counts.round_trip_passed <= counts.generated);
        assert!(counts.selected <= counts.round_trip_passed);
    }

    #[test]
    fn example_with_only_gold_answers_emits_nothing() {
        let c = Corpus::from_passages(vec![Passage::new(
            "p1",
            "",
            "Trent Cotchin is the captain of the Richmond Football Club.",
        )])
        .unwrap();
        let index = build_index(&c, Default::default());
        let config = PipelineConfig::default();
        let gateway = Gateway::from_config(&config).unwrap();
        let ex = example(&c);
        let (selected, manifest) = run_rgf(&[ex], &index, &gateway, &config).unwrap();
        assert!(selected.is_empty());
        assert_eq!(manifest.counts.examples, Some(1));
        assert_eq!(manifest.counts.retrieved, Some(1));
        assert_eq!(manifest.counts.mismatch_retained, Some(0));
        assert_eq!(manifest.counts.selected, Some(0));
    }

    #[test]
    fn gold_strategy_maximizes_distance() {
        let c = corpus();
        let index = build_index(&c, Default::default());
        let config = PipelineConfig {
            context_strategy: ContextStrategy::Gold,
            ..Default::default()
        };
        assert_eq!(config.effective_selection(), SelectionMode::Max);
        let gateway = Gateway::from_config(&config).unwrap();
        let ex = example(&c);
        let (candidates, _) = retrieve_for_example(&ex, &index, &gateway, &config).unwrap();
        let mut triples = generate_for_example(&candidates, &gateway, &config).unwrap();
        round_trip_all(&mut triples, &gateway, &config);
        let best = triples
            .iter()
            .filter(|t| t.passed(FilterVerdict::ROUND_TRIP))
            .map(|t| question_distance(&ex.question, &t.question))
            .max()
            .unwrap();
        let (selected, _) = run_rgf(&[ex.clone()], &index, &gateway, &config).unwrap();
        assert_eq!(selected[0].verdicts[FilterVerdict::MAXIMALITY].edit_distance, Some(best));
        assert_eq!(selected[0].context.passage_id, "p1");
    }

    #[test]
    fn overgeneration_stops_at_target() {
        let c = corpus();
        let index = build_index(&c, Default::default());
        let config = PipelineConfig {
            context_strategy: ContextStrategy::Gold,
            overgenerate_target: 7,
            ..Default::default()
        };
        let gateway = Gateway::from_config(&config).unwrap();
        let (candidates, _) = retrieve_for_example(&example(&c), &index, &gateway, &config).unwrap();
        let triples = generate_for_example(&candidates, &gateway, &config).unwrap();
        assert_eq!(triples.len(), 7);
        let ids: HashSet<_> = triples.iter().map(|t| &t.triple_id).collect();
        assert_eq!(ids.len(), 7);
    }

    #[test]
    fn duplicate_example_ids_rejected() {
        let c = corpus();
        let index = build_index(&c, Default::default());
        let config = PipelineConfig::default();
        let gateway = Gateway::from_config(&config).unwrap();
        let ex = example(&c);
        let err = run_rgf(&[ex.clone(), ex], &index, &gateway, &config).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(_)));
    }

    #[test]
    fn random_strategy_is_seeded() {
        let c = corpus();
        let index = build_index(&c, Default::default());
        let config = PipelineConfig {
            context_strategy: ContextStrategy::Random,
            ..Default::default()
        };
        let gateway = Gateway::from_config(&config).unwrap();
        let ex = example(&c);
        let a = candidate_contexts(&ex, &index, &gateway, &config).unwrap();
        let b = candidate_contexts(&ex, &index, &gateway, &config).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| x.passage.passage_id == a[0].passage.passage_id));
    }
}
