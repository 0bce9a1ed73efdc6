use std::collections::BTreeMap;
use std::sync::Arc;

use super::{read, GatewayError, Reader, ReaderResponse};
use crate::error::{Error, Result};
use crate::text::normalize_answer;
use crate::types::{AnswerSpan, Passage};

/// Readers whose answers normalize to the same string.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteGroup {
    pub key: String,
    pub count: usize,
    /// Smallest span (by passage, offsets) among the group's answers.
    pub representative: AnswerSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleAnswer {
    /// Majority answer, present only when its group reaches the threshold.
    pub answer: Option<AnswerSpan>,
    /// Size of the largest group.
    pub vote_count: usize,
    /// All groups, largest first, ties by key.
    pub groups: Vec<VoteGroup>,
}

impl EnsembleAnswer {
    pub fn votes_for(&self, key: &str) -> usize {
        self.groups
            .iter()
            .find(|g| g.key == key)
            .map_or(0, |g| g.count)
    }
}

/// Groups reader answers by normalized surface. Abstentions do not vote.
/// The result does not depend on the order of `responses`.
pub fn tally_votes(responses: &[ReaderResponse], threshold: usize) -> EnsembleAnswer {
    let mut groups: BTreeMap<String, VoteGroup> = BTreeMap::new();
    for span in responses.iter().filter_map(|r| r.answer.as_ref()) {
        let key = normalize_answer(&span.surface);
        groups
            .entry(key.clone())
            .and_modify(|g| {
                g.count += 1;
                let cand = (&span.passage_id, span.char_start, span.char_end);
                let cur = (
                    &g.representative.passage_id,
                    g.representative.char_start,
                    g.representative.char_end,
                );
                if cand < cur {
                    g.representative = span.clone();
                }
            })
            .or_insert_with(|| VoteGroup {
                key,
                count: 1,
                representative: span.clone(),
            });
    }
    let mut groups: Vec<VoteGroup> = groups.into_values().collect();
    groups.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.key.cmp(&b.key)));
    let vote_count = groups.first().map_or(0, |g| g.count);
    let answer = groups
        .first()
        .filter(|g| g.count >= threshold)
        .map(|g| g.representative.clone());
    EnsembleAnswer {
        answer,
        vote_count,
        groups,
    }
}

/// A set of readers that answer by vote.
#[derive(Clone)]
pub struct ReaderEnsemble {
    readers: Vec<Arc<dyn Reader>>,
    threshold: usize,
}

impl std::fmt::Debug for ReaderEnsemble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReaderEnsemble")
            .field("size", &self.readers.len())
            .field("threshold", &self.threshold)
            .finish()
    }
}

pub fn make_reader_ensemble(readers: Vec<Arc<dyn Reader>>, threshold: usize) -> Result<ReaderEnsemble> {
    if threshold == 0 || threshold > readers.len() {
        return Err(Error::Config(format!(
            "agreement threshold {threshold} must be in 1..={}",
            readers.len()
        )));
    }
    Ok(ReaderEnsemble { readers, threshold })
}

impl ReaderEnsemble {
    pub fn size(&self) -> usize {
        self.readers.len()
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn readers(&self) -> &[Arc<dyn Reader>] {
        &self.readers
    }

    /// Queries every member in order; the first transport error aborts.
    pub fn read(&self, question: &str, context: &Passage) -> Result<EnsembleAnswer, GatewayError> {
        let responses = self
            .readers
            .iter()
            .map(|r| read(r.as_ref(), question, context))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(tally_votes(&responses, self.threshold))
    }
}
