//! Answer-mismatch retention, round-trip noise filtering and edit-distance
//! selection.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gateway::{EnsembleAnswer, GatewayError, ReaderEnsemble};
use crate::text::{answers_match, normalize_answer, question_distance};
use crate::types::{AnswerSpan, CandidateContext, Example, FilterVerdict, GeneratedTriple};

/// Keeps candidates whose answer matches none of the gold aliases, in order.
pub fn answer_mismatch_filter<S: AsRef<str>>(
    candidates: Vec<CandidateContext>,
    gold_answers: &[S],
) -> Vec<CandidateContext> {
    candidates
        .into_iter()
        .filter(|c| !answers_match(&c.answer.surface, gold_answers))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundTripMode {
    /// At least `m` readers agree and their answer matches the target.
    #[default]
    Target,
    /// At least `m` readers agree on any answer.
    Mutual,
}

impl FromStr for RoundTripMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "target" => Ok(RoundTripMode::Target),
            "mutual" => Ok(RoundTripMode::Mutual),
            other => Err(format!("unknown round-trip mode `{other}` (expected target|mutual)")),
        }
    }
}

/// Turns a tally of reader votes into a round-trip verdict for `target`.
pub fn round_trip_verdict(
    votes: &EnsembleAnswer,
    target: &AnswerSpan,
    threshold: usize,
    mode: RoundTripMode,
) -> FilterVerdict {
    let top = votes.groups.first();
    match mode {
        RoundTripMode::Target => {
            let key = normalize_answer(&target.surface);
            let count = votes.votes_for(&key);
            if count >= threshold {
                FilterVerdict::round_trip(true, count, Some(key))
            } else {
                FilterVerdict::round_trip(false, votes.vote_count, top.map(|g| g.key.clone()))
            }
        }
        RoundTripMode::Mutual => FilterVerdict::round_trip(
            votes.vote_count >= threshold,
            votes.vote_count,
            top.map(|g| g.key.clone()),
        ),
    }
}

/// Asks every ensemble member to answer the triple's question over its
/// context and checks agreement.
pub fn round_trip_filter(
    triple: &GeneratedTriple,
    ensemble: &ReaderEnsemble,
    mode: RoundTripMode,
) -> Result<FilterVerdict, GatewayError> {
    let votes = ensemble.read(&triple.question, &triple.context)?;
    Ok(round_trip_verdict(&votes, &triple.answer, ensemble.threshold(), mode))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Smallest non-zero question edit distance.
    #[default]
    Min,
    /// Largest question edit distance.
    Max,
}

impl SelectionMode {
    pub fn verdict_name(self) -> &'static str {
        match self {
            SelectionMode::Min => FilterVerdict::MINIMALITY,
            SelectionMode::Max => FilterVerdict::MAXIMALITY,
        }
    }
}

impl FromStr for SelectionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min" => Ok(SelectionMode::Min),
            "max" => Ok(SelectionMode::Max),
            other => Err(format!("unknown selection `{other}` (expected min|max)")),
        }
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMode::Min => "min",
            SelectionMode::Max => "max",
        })
    }
}

/// Tie-break chain: ascending retrieval rank, beam index, question text.
fn tie_break(a: &GeneratedTriple, b: &GeneratedTriple) -> Ordering {
    a.retrieval_rank
        .cmp(&b.retrieval_rank)
        .then(a.beam_index.cmp(&b.beam_index))
        .then_with(|| a.question.cmp(&b.question))
}

/// Picks one survivor by question edit distance to the original. Distance-0
/// questions are never selected. The chosen triple gets a selection verdict
/// recording the distance.
pub fn select(
    original: &Example,
    survivors: &[GeneratedTriple],
    mode: SelectionMode,
) -> Option<GeneratedTriple> {
    let best = survivors
        .iter()
        .map(|t| (question_distance(&original.question, &t.question), t))
        .filter(|(d, _)| *d > 0)
        .min_by(|(da, a), (db, b)| {
            let by_distance = match mode {
                SelectionMode::Min => da.cmp(db),
                SelectionMode::Max => db.cmp(da),
            };
            by_distance.then_with(|| tie_break(a, b))
        })?;
    let (distance, triple) = best;
    let mut chosen = triple.clone();
    chosen
        .verdicts
        .insert(mode.verdict_name().to_string(), FilterVerdict::selection(distance));
    Some(chosen)
}

pub fn minimality_select(original: &Example, survivors: &[GeneratedTriple]) -> Option<GeneratedTriple> {
    select(original, survivors, SelectionMode::Min)
}

pub fn maximality_select(original: &Example, survivors: &[GeneratedTriple]) -> Option<GeneratedTriple> {
    select(original, survivors, SelectionMode::Max)
}
