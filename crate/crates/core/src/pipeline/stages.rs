//! Single-stage entry points over JSONL files.
//!
//! | stage       | input              | extra inputs               | output               |
//! |-------------|--------------------|----------------------------|----------------------|
//! | retrieve    | examples           | corpus                     | candidate contexts   |
//! | generate    | candidate contexts |                            | triples              |
//! | filter      | triples            |                            | triples + round trip |
//! | select      | triples            | examples                   | selected triples     |
//! | export      | selected triples   | examples                   | augmented records    |
//! | pair        | selected triples   | examples, gazetteer        | paired records       |
//! | consistency | paired records     | predictions                | report (JSON)        |
//! | stats       | selected triples   | report, examples (opt.)    | statistics (JSON)    |

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::{
    build_decomposer, check_unique_ids, export_augmented, generate_for_example, retrieve_for_example,
    round_trip_all, select_for_example, sorted_by_id, Gateway, PipelineConfig, RunManifest, StageCounts,
};
use crate::corpus::{build_index, ingest_corpus_file};
use crate::error::{Error, Result};
use crate::eval::{
    edit_distance_histogram, join_predictions, pairwise_consistency, question_type_distribution,
    rank_vs_distance_curve, recorded_distance, shard_by_edit_distance, triple_distance, Metric, Prediction,
};
use crate::jsonl;
use crate::qed::{build_paired_eval, Gazetteer, PairedRecord, PerturbationCategory};
use crate::types::{CandidateContext, Example, FilterVerdict, GeneratedTriple};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Retrieve,
    Generate,
    Filter,
    Select,
    Pair,
    Consistency,
    Stats,
    Export,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Retrieve,
        Stage::Generate,
        Stage::Filter,
        Stage::Select,
        Stage::Pair,
        Stage::Consistency,
        Stage::Stats,
        Stage::Export,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Retrieve => "retrieve",
            Stage::Generate => "generate",
            Stage::Filter => "filter",
            Stage::Select => "select",
            Stage::Pair => "pair",
            Stage::Consistency => "consistency",
            Stage::Stats => "stats",
            Stage::Export => "export",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| {
            let names: Vec<_> = Stage::ALL.iter().map(|s| s.name()).collect();
            Error::Usage(format!("unknown stage `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatsReport {
    EdHist,
    RankCurve,
    Qtype,
    Shards,
}

impl FromStr for StatsReport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ed-hist" => Ok(StatsReport::EdHist),
            "rank-curve" => Ok(StatsReport::RankCurve),
            "qtype" => Ok(StatsReport::Qtype),
            "shards" => Ok(StatsReport::Shards),
            other => Err(format!(
                "unknown report `{other}` (expected ed-hist|rank-curve|qtype|shards)"
            )),
        }
    }
}

/// Inputs and options beyond the main input file.
#[derive(Debug, Clone, Default)]
pub struct StageArgs {
    pub examples: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub category: Option<PerturbationCategory>,
    pub metric: Metric,
    pub breakdown: bool,
    pub report: Option<StatsReport>,
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str, stage: Stage) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Usage(format!("stage `{stage}` needs --{flag}")))
}

/// Runs one stage from `input` to `output` and returns its manifest.
pub fn run_stage(
    stage_name: &str,
    input: &Path,
    output: &Path,
    config: &PipelineConfig,
    args: &StageArgs,
) -> Result<RunManifest> {
    let stage: Stage = stage_name.parse()?;
    config.validate()?;
    let mut counts = StageCounts::default();
    let mut extra_inputs: Vec<(&str, &Path)> = Vec::new();
    match stage {
        Stage::Retrieve => {
            let corpus_path = required(&args.corpus, "corpus", stage)?;
            extra_inputs.push(("corpus", corpus_path));
            let examples: Vec<Example> = jsonl::read(input)?;
            let corpus = ingest_corpus_file(corpus_path)?;
            let (candidates, c) = retrieve_stage(&examples, &corpus, config)?;
            counts = c;
            jsonl::write(output, &candidates)?;
        }
        Stage::Generate => {
            let candidates: Vec<CandidateContext> = jsonl::read(input)?;
            let (triples, c) = generate_stage(&candidates, config)?;
            counts = c;
            jsonl::write(output, &triples)?;
        }
        Stage::Filter => {
            let mut triples: Vec<GeneratedTriple> = jsonl::read(input)?;
            counts = filter_stage(&mut triples, config)?;
            jsonl::write(output, &triples)?;
        }
        Stage::Select => {
            let examples_path = required(&args.examples, "examples", stage)?;
            extra_inputs.push(("examples", examples_path));
            let triples: Vec<GeneratedTriple> = jsonl::read(input)?;
            let examples: Vec<Example> = jsonl::read(examples_path)?;
            let (selected, c) = select_stage(&examples, &triples, config)?;
            counts = c;
            jsonl::write(output, &selected)?;
        }
        Stage::Export => {
            let examples_path = required(&args.examples, "examples", stage)?;
            extra_inputs.push(("examples", examples_path));
            let triples: Vec<GeneratedTriple> = jsonl::read(input)?;
            let examples: Vec<Example> = jsonl::read(examples_path)?;
            let records = export_augmented(&examples, &triples, config.seed)?;
            counts.records = Some(records.len());
            jsonl::write(output, &records)?;
        }
        Stage::Pair => {
            let examples_path = required(&args.examples, "examples", stage)?;
            extra_inputs.push(("examples", examples_path));
            let gazetteer = match &args.gazetteer {
                Some(p) => {
                    extra_inputs.push(("gazetteer", p));
                    Gazetteer::load(p)?
                }
                None => Gazetteer::default(),
            };
            let triples: Vec<GeneratedTriple> = jsonl::read(input)?;
            let examples: Vec<Example> = jsonl::read(examples_path)?;
            check_unique_ids(examples.iter().map(|e| e.example_id.as_str()))?;
            let decomposer = build_decomposer(&config.gateway, gazetteer)?;
            let category = args.category.unwrap_or(PerturbationCategory::ReferenceChange);
            let pairs = build_paired_eval(&examples, &triples, decomposer.as_ref(), category)?;
            counts.records = Some(pairs.len());
            jsonl::write(output, &pairs)?;
        }
        Stage::Consistency => {
            let preds_path = required(&args.predictions, "predictions", stage)?;
            extra_inputs.push(("predictions", preds_path));
            let pairs: Vec<PairedRecord> = jsonl::read(input)?;
            let predictions: Vec<Prediction> = jsonl::read(preds_path)?;
            let scored = join_predictions(&pairs, &predictions, args.metric, args.breakdown)?;
            let report = pairwise_consistency(&scored)?;
            counts.records = Some(pairs.len());
            jsonl::write_json(output, &report)?;
        }
        Stage::Stats => {
            let report = args
                .report
                .ok_or_else(|| Error::Usage("stage `stats` needs --report".into()))?;
            let triples: Vec<GeneratedTriple> = jsonl::read(input)?;
            let examples: Option<Vec<Example>> = match &args.examples {
                Some(p) => {
                    extra_inputs.push(("examples", p));
                    Some(jsonl::read(p)?)
                }
                None => None,
            };
            let value = stats_report(&triples, examples.as_deref(), report)?;
            counts.records = Some(triples.len());
            jsonl::write_json(output, &value)?;
        }
    }
    let mut manifest = RunManifest::new(stage.name(), config, counts);
    manifest.add_input("input", input)?;
    for (name, path) in extra_inputs {
        manifest.add_input(name, path)?;
    }
    Ok(manifest)
}

/// Candidate contexts for every example, sorted by example id, after
/// mismatch filtering.
pub fn retrieve_stage(
    examples: &[Example],
    corpus: &crate::corpus::Corpus,
    config: &PipelineConfig,
) -> Result<(Vec<CandidateContext>, StageCounts)> {
    check_unique_ids(examples.iter().map(|e| e.example_id.as_str()))?;
    let gateway = Gateway::from_config(config)?;
    let index = build_index(corpus, config.bm25);
    let results: Vec<Option<(Vec<CandidateContext>, usize)>> = sorted_by_id(examples)
        .par_iter()
        .map(|e| match retrieve_for_example(e, &index, &gateway, config) {
            Ok(v) => Some(v),
            Err(err) => {
                log::warn!("example {}: retrieval failed: {err}", e.example_id);
                None
            }
        })
        .collect();
    let counts = StageCounts {
        examples: Some(examples.len()),
        failed_examples: Some(results.iter().filter(|r| r.is_none()).count()),
        retrieved: Some(results.iter().flatten().map(|r| r.1).sum()),
        mismatch_retained: Some(results.iter().flatten().map(|r| r.0.len()).sum()),
        ..Default::default()
    };
    let candidates = results.into_iter().flatten().flat_map(|r| r.0).collect();
    Ok((candidates, counts))
}

/// Triples for every example group in the candidate file, sorted by
/// example id. Groups whose generation fails are skipped.
pub fn generate_stage(
    candidates: &[CandidateContext],
    config: &PipelineConfig,
) -> Result<(Vec<GeneratedTriple>, StageCounts)> {
    let gateway = Gateway::from_config(config)?;
    let mut by_example: BTreeMap<&str, Vec<CandidateContext>> = BTreeMap::new();
    for c in candidates {
        by_example.entry(&c.example_id).or_default().push(c.clone());
    }
    let groups: Vec<(&str, Vec<CandidateContext>)> = by_example.into_iter().collect();
    let results: Vec<Option<Vec<GeneratedTriple>>> = groups
        .par_iter()
        .map(|(id, cands)| match generate_for_example(cands, &gateway, config) {
            Ok(t) => Some(t),
            Err(e) => {
                log::warn!("example {id}: generation failed: {e}");
                None
            }
        })
        .collect();
    let counts = StageCounts {
        failed_examples: Some(results.iter().filter(|r| r.is_none()).count()),
        generated: Some(results.iter().flatten().map(Vec::len).sum()),
        ..Default::default()
    };
    Ok((results.into_iter().flatten().flatten().collect(), counts))
}

/// Adds round-trip verdicts in place; order is preserved.
pub fn filter_stage(triples: &mut [GeneratedTriple], config: &PipelineConfig) -> Result<StageCounts> {
    let gateway = Gateway::from_config(config)?;
    triples
        .par_iter_mut()
        .for_each(|t| round_trip_all(std::slice::from_mut(t), &gateway, config));
    Ok(StageCounts {
        generated: Some(triples.len()),
        round_trip_passed: Some(
            triples
                .iter()
                .filter(|t| t.passed(FilterVerdict::ROUND_TRIP))
                .count(),
        ),
        ..Default::default()
    })
}

/// At most one triple per example, sorted by example id.
pub fn select_stage(
    examples: &[Example],
    triples: &[GeneratedTriple],
    config: &PipelineConfig,
) -> Result<(Vec<GeneratedTriple>, StageCounts)> {
    check_unique_ids(examples.iter().map(|e| e.example_id.as_str()))?;
    let mut by_source: HashMap<&str, Vec<GeneratedTriple>> = HashMap::new();
    for t in triples {
        by_source
            .entry(t.source_example_id.as_str())
            .or_default()
            .push(t.clone());
    }
    let selected: Vec<GeneratedTriple> = sorted_by_id(examples)
        .into_iter()
        .filter_map(|e| {
            let group = by_source.get(e.example_id.as_str())?;
            select_for_example(e, group, config)
        })
        .collect();
    let counts = StageCounts {
        examples: Some(examples.len()),
        round_trip_passed: Some(
            triples
                .iter()
                .filter(|t| t.passed(FilterVerdict::ROUND_TRIP))
                .count(),
        ),
        selected: Some(selected.len()),
        ..Default::default()
    };
    Ok((selected, counts))
}

/// Question edit distance per triple, from the originals when given,
/// otherwise from the recorded selection verdict.
fn distances(triples: &[GeneratedTriple], examples: Option<&[Example]>) -> Result<Vec<usize>> {
    let originals: Option<HashMap<&str, &Example>> =
        examples.map(|ex| ex.iter().map(|e| (e.example_id.as_str(), e)).collect());
    triples
        .iter()
        .map(|t| match &originals {
            Some(map) => map
                .get(t.source_example_id.as_str())
                .map(|e| triple_distance(&e.question, t))
                .ok_or_else(|| {
                    Error::InvalidRecord(format!(
                        "triple `{}`: source example `{}` not found",
                        t.triple_id, t.source_example_id
                    ))
                }),
            None => recorded_distance(t).ok_or_else(|| {
                Error::InvalidRecord(format!(
                    "triple `{}` has no recorded edit_distance; pass --examples",
                    t.triple_id
                ))
            }),
        })
        .collect()
}

/// One descriptive statistic as JSON.
pub fn stats_report(triples: &[GeneratedTriple], examples: Option<&[Example]>, report: StatsReport) -> Result<Value> {
    Ok(match report {
        StatsReport::Qtype => {
            let questions: Vec<&str> = triples.iter().map(|t| t.question.as_str()).collect();
            Value::Array(
                question_type_distribution(&questions)
                    .into_iter()
                    .map(|(t, n)| json!({"type": t, "count": n}))
                    .collect(),
            )
        }
        StatsReport::EdHist => {
            let hist = edit_distance_histogram(distances(triples, examples)?);
            Value::Array(
                hist.into_iter()
                    .map(|(d, n)| json!({"distance": d, "count": n}))
                    .collect(),
            )
        }
        StatsReport::RankCurve => {
            let d = distances(triples, examples)?;
            let points = triples.iter().map(|t| t.retrieval_rank).zip(d);
            Value::Array(
                rank_vs_distance_curve(points)
                    .into_iter()
                    .map(|(r, m)| json!({"rank": r, "mean_distance": m}))
                    .collect(),
            )
        }
        StatsReport::Shards => {
            let d = distances(triples, examples)?;
            let s = shard_by_edit_distance(triples.iter().map(|t| t.triple_id.as_str()).zip(d));
            json!({
                "1-4": s.short,
                "5-10": s.medium,
                "11+": s.long,
                "excluded_zero": s.excluded,
            })
        }
    })
}
