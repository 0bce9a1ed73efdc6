//! Canonical records shared by every stage.
//!
//! All character offsets are code-point offsets into `Passage::body`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{self, normalize_answer};

/// A context passage. `token_spans` is derived from `body` and never serialized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "PassageRecord")]
pub struct Passage {
    pub passage_id: String,
    pub title: String,
    pub body: String,
    #[serde(skip)]
    pub token_spans: Vec<(usize, usize)>,
}

#[derive(Deserialize)]
struct PassageRecord {
    passage_id: String,
    #[serde(default)]
    title: String,
    body: String,
}

impl From<PassageRecord> for Passage {
    fn from(r: PassageRecord) -> Self {
        Passage::new(r.passage_id, r.title, r.body)
    }
}

impl Passage {
    pub fn new(passage_id: impl Into<String>, title: impl Into<String>, body: impl Into<String>) -> Self {
        let body = body.into();
        let token_spans = text::tokenize_with_spans(&body)
            .into_iter()
            .map(|t| (t.char_start, t.char_end))
            .collect();
        Passage {
            passage_id: passage_id.into(),
            title: title.into(),
            body,
            token_spans,
        }
    }

    pub fn char_len(&self) -> usize {
        self.body.chars().count()
    }

    pub fn token_count(&self) -> usize {
        self.token_spans.len()
    }

    /// Builds a span over `body[char_start..char_end]`.
    pub fn span(&self, char_start: usize, char_end: usize) -> Result<AnswerSpan> {
        if char_start >= char_end || char_end > self.char_len() {
            return Err(Error::InvalidRecord(format!(
                "span {char_start}..{char_end} out of bounds for passage `{}`",
                self.passage_id
            )));
        }
        Ok(AnswerSpan {
            passage_id: self.passage_id.clone(),
            char_start,
            char_end,
            surface: text::char_slice(&self.body, char_start, char_end).to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub passage_id: String,
    pub char_start: usize,
    pub char_end: usize,
    pub surface: String,
}

impl AnswerSpan {
    /// Checks that the span points at its surface inside `passage`.
    pub fn char_len(&self) -> usize {
        self.char_end - self.char_start
    }

    pub fn validate_against(&self, passage: &Passage) -> Result<()> {
        let expected = passage.span(self.char_start, self.char_end)?;
        if expected.surface != self.surface || self.passage_id != passage.passage_id {
            return Err(Error::InvalidRecord(format!(
                "answer surface `{}` does not match passage `{}` at {}..{}",
                self.surface, passage.passage_id, self.char_start, self.char_end
            )));
        }
        Ok(())
    }
}

/// An original labeled (question, context, answer) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub example_id: String,
    pub question: String,
    pub context: Passage,
    pub gold_answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_span: Option<AnswerSpan>,
}

/// Outcome of one filter on one triple. Which metadata fields are set
/// depends on the filter; use the constructors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreed_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_distance: Option<usize>,
}

impl FilterVerdict {
    pub const ANSWER_MISMATCH: &'static str = "answer_mismatch";
    pub const ROUND_TRIP: &'static str = "round_trip";
    pub const MINIMALITY: &'static str = "minimality";
    pub const MAXIMALITY: &'static str = "maximality";

    pub fn mismatch(passed: bool) -> Self {
        FilterVerdict {
            passed,
            vote_count: None,
            agreed_answer: None,
            edit_distance: None,
        }
    }

    pub fn round_trip(passed: bool, vote_count: usize, agreed_answer: Option<String>) -> Self {
        FilterVerdict {
            passed,
            vote_count: Some(vote_count),
            agreed_answer,
            edit_distance: None,
        }
    }

    pub fn selection(edit_distance: usize) -> Self {
        FilterVerdict {
            passed: true,
            vote_count: None,
            agreed_answer: None,
            edit_distance: Some(edit_distance),
        }
    }
}

/// A counterfactual (q', c', a') with provenance and filter verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTriple {
    pub triple_id: String,
    pub source_example_id: String,
    pub question: String,
    pub context: Passage,
    pub answer: AnswerSpan,
    pub retrieval_rank: u32,
    pub beam_index: u32,
    pub generator_id: String,
    #[serde(default)]
    pub verdicts: BTreeMap<String, FilterVerdict>,
}

impl GeneratedTriple {
    pub fn passed(&self, filter_name: &str) -> bool {
        self.verdicts.get(filter_name).is_some_and(|v| v.passed)
    }
}

/// A retrieved passage plus an answer span inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateContext {
    pub example_id: String,
    pub passage: Passage,
    pub answer: AnswerSpan,
    pub retrieval_rank: u32,
}

/// Structural checks run on every record read from disk.
pub trait Validate {
    fn validate(&self) -> Result<()>;
}

impl Validate for Passage {
    fn validate(&self) -> Result<()> {
        if self.passage_id.is_empty() {
            return Err(Error::InvalidRecord("empty passage_id".into()));
        }
        Ok(())
    }
}

impl Validate for Example {
    fn validate(&self) -> Result<()> {
        self.context.validate()?;
        if self.gold_answers.is_empty() {
            return Err(Error::InvalidRecord(format!(
                "example `{}` has no gold_answers",
                self.example_id
            )));
        }
        if let Some(alias) = self.gold_answers.iter().find(|a| normalize_answer(a).is_empty()) {
            return Err(Error::InvalidRecord(format!(
                "example `{}` has gold alias `{alias}` that normalizes to empty",
                self.example_id
            )));
        }
        if let Some(span) = &self.gold_span {
            span.validate_against(&self.context)?;
            if !text::answers_match(&span.surface, &self.gold_answers) {
                return Err(Error::InvalidRecord(format!(
                    "example `{}`: gold_span `{}` is not a gold alias",
                    self.example_id, span.surface
                )));
            }
        }
        Ok(())
    }
}

impl Validate for GeneratedTriple {
    fn validate(&self) -> Result<()> {
        self.context.validate()?;
        if self.retrieval_rank == 0 {
            return Err(Error::InvalidRecord(format!(
                "triple `{}` has retrieval_rank 0",
                self.triple_id
            )));
        }
        self.answer.validate_against(&self.context)
    }
}

impl Validate for CandidateContext {
    fn validate(&self) -> Result<()> {
        self.passage.validate()?;
        self.answer.validate_against(&self.passage)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passage_round_trips_without_token_spans() {
        let p = Passage::new("p1", "Richmond", "Trent Cotchin is captain.");
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(
            json,
            r#"{"passage_id":"p1","title":"Richmond","body":"Trent Cotchin is captain."}"#
        );
        let back: Passage = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.token_spans, vec![(0, 5), (6, 13), (14, 16), (17, 24)]);
    }

    #[test]
    fn span_surface_is_substring() {
        let p = Passage::new("p1", "", "Zoë Ball won in 1994.");
        let s = p.span(0, 8).unwrap();
        assert_eq!(s.surface, "Zoë Ball");
        assert!(p.span(3, 3).is_err());
        assert!(p.span(0, 99).is_err());
    }

    #[test]
    fn example_validation() {
        let ctx = Passage::new("p", "", "Trent Cotchin is captain.");
        let mut ex = Example {
            example_id: "e".into(),
            question: "who is captain".into(),
            context: ctx.clone(),
            gold_answers: vec!["Trent Cotchin".into()],
            gold_span: Some(ctx.span(0, 13).unwrap()),
        };
        ex.validate().unwrap();
        ex.gold_answers = vec!["Jeff Hogg".into()];
        assert!(ex.validate().is_err());
        ex.gold_answers = vec!["the".into()];
        ex.gold_span = None;
        assert!(ex.validate().is_err());
        ex.gold_answers.clear();
        assert!(ex.validate().is_err());
    }

    #[test]
    fn verdict_serialization_omits_unset_metadata() {
        let v = FilterVerdict::round_trip(true, 6, Some("jeff hogg".into()));
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            r#"{"passed":true,"vote_count":6,"agreed_answer":"jeff hogg"}"#
        );
        assert_eq!(
            serde_json::to_string(&FilterVerdict::selection(3)).unwrap(),
            r#"{"passed":true,"edit_distance":3}"#
        );
    }
}
