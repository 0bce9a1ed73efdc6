use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::check_unique_ids;
use crate::error::{Error, Result};
use crate::types::{AnswerSpan, Example, FilterVerdict, GeneratedTriple, Passage, Validate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_example_id: String,
    pub retrieval_rank: u32,
    pub beam_index: u32,
    pub generator_id: String,
    pub verdicts: BTreeMap<String, FilterVerdict>,
}

/// One training record: an original example or a counterfactual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    pub example_id: String,
    pub question: String,
    pub context: Passage,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_span: Option<AnswerSpan>,
    /// Set only on counterfactuals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl Validate for AugmentedRecord {
    fn validate(&self) -> Result<()> {
        if self.example_id.is_empty() {
            return Err(Error::InvalidRecord("empty example_id".into()));
        }
        if let Some(span) = &self.answer_span {
            span.validate_against(&self.context)?;
        }
        Ok(())
    }
}

impl From<&Example> for AugmentedRecord {
    fn from(e: &Example) -> Self {
        AugmentedRecord {
            example_id: e.example_id.clone(),
            question: e.question.clone(),
            context: e.context.clone(),
            answers: e.gold_answers.clone(),
            answer_span: e.gold_span.clone(),
            provenance: None,
        }
    }
}

impl From<&GeneratedTriple> for AugmentedRecord {
    fn from(t: &GeneratedTriple) -> Self {
        AugmentedRecord {
            example_id: t.triple_id.clone(),
            question: t.question.clone(),
            context: t.context.clone(),
            answers: vec![t.answer.surface.clone()],
            answer_span: Some(t.answer.clone()),
            provenance: Some(Provenance {
                source_example_id: t.source_example_id.clone(),
                retrieval_rank: t.retrieval_rank,
                beam_index: t.beam_index,
                generator_id: t.generator_id.clone(),
                verdicts: t.verdicts.clone(),
            }),
        }
    }
}

/// Originals plus at most one counterfactual each, shuffled by `seed`.
pub fn export_augmented(
    originals: &[Example],
    selected: &[GeneratedTriple],
    seed: u64,
) -> Result<Vec<AugmentedRecord>> {
    let known: HashSet<&str> = originals.iter().map(|e| e.example_id.as_str()).collect();
    let mut used = HashSet::new();
    for t in selected {
        if !known.contains(t.source_example_id.as_str()) {
            return Err(Error::InvalidRecord(format!(
                "triple `{}` has unknown source example `{}`",
                t.triple_id, t.source_example_id
            )));
        }
        if !used.insert(t.source_example_id.as_str()) {
            return Err(Error::InvalidRecord(format!(
                "more than one counterfactual for example `{}`",
                t.source_example_id
            )));
        }
    }
    let mut records: Vec<AugmentedRecord> = originals
        .iter()
        .map(AugmentedRecord::from)
        .chain(selected.iter().map(AugmentedRecord::from))
        .collect();
    check_unique_ids(records.iter().map(|r| r.example_id.as_str()))?;
    records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(records)
}
