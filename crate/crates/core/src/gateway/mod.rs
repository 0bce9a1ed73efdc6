//! Contracts for the learned components and their implementations.
//!
//! Three model roles sit behind traits: question generation, reading
//! comprehension and question decomposition. Each has a deterministic offline
//! mock and an HTTP adapter speaking the JSON protocol in [`wire`].

mod ensemble;
mod mock;
pub mod conformance;
pub mod remote;
pub mod wire;

use std::collections::HashSet;

use thiserror::Error;

use crate::qed::QedDecomposition;
use crate::text::normalize_answer;
use crate::types::{AnswerSpan, Passage};

pub use ensemble::{make_reader_ensemble, tally_votes, EnsembleAnswer, ReaderEnsemble, VoteGroup};
pub use mock::{
    host_sentence, sentence_ranges, AnswerKind, ClozeGenerator, ClozeReader, FixedReader,
    HeuristicExtractor, NoisyReader, CLOZE_GENERATOR_ID,
};

pub const DEFAULT_NUM_QUESTIONS: usize = 15;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("transport error from {endpoint} (status {status:?}): {message}")]
    Transport {
        endpoint: String,
        status: Option<u16>,
        message: String,
    },
    #[error("protocol violation from {endpoint}: {message}")]
    Protocol { endpoint: String, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy)]
pub struct GeneratorRequest<'a> {
    pub context: &'a Passage,
    pub answer: &'a AnswerSpan,
    pub num_questions: usize,
}

impl GeneratorRequest<'_> {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.num_questions == 0 {
            return Err(GatewayError::InvalidRequest("num_questions must be >= 1".into()));
        }
        self.answer
            .validate_against(self.context)
            .map_err(|e| GatewayError::InvalidRequest(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedQuestion {
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorResponse {
    /// Best first; scores non-increasing.
    pub questions: Vec<GeneratedQuestion>,
    pub generator_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReaderResponse {
    pub answer: Option<AnswerSpan>,
    pub score: f64,
}

impl ReaderResponse {
    pub fn none() -> Self {
        ReaderResponse {
            answer: None,
            score: 0.0,
        }
    }
}

pub trait QuestionGenerator: Send + Sync {
    fn generate(&self, request: &GeneratorRequest<'_>) -> Result<GeneratorResponse, GatewayError>;
}

pub trait Reader: Send + Sync {
    fn read(&self, question: &str, context: &Passage) -> Result<ReaderResponse, GatewayError>;
}

pub trait Decomposer: Send + Sync {
    fn decompose(
        &self,
        question: &str,
        context: Option<&Passage>,
        answer: Option<&AnswerSpan>,
    ) -> Result<QedDecomposition, GatewayError>;
}

/// Proposes question-independent answer spans in a passage.
pub trait AnswerExtractor: Send + Sync {
    fn extract(&self, passage: &Passage, n: usize) -> Vec<AnswerSpan>;
}

/// Runs a generator and enforces the response contract: at most
/// `num_questions` distinct, non-empty questions in best-first order.
pub fn generate_questions(
    generator: &dyn QuestionGenerator,
    request: &GeneratorRequest<'_>,
) -> Result<GeneratorResponse, GatewayError> {
    request.validate()?;
    let mut response = generator.generate(request)?;
    let mut seen = HashSet::new();
    response
        .questions
        .retain(|q| !q.text.trim().is_empty() && seen.insert(q.text.clone()));
    response
        .questions
        .sort_by(|a, b| b.score.total_cmp(&a.score));
    response.questions.truncate(request.num_questions);
    Ok(response)
}

/// Runs a reader and rejects spans that do not point into `context`.
pub fn read(
    reader: &dyn Reader,
    question: &str,
    context: &Passage,
) -> Result<ReaderResponse, GatewayError> {
    let response = reader.read(question, context)?;
    if let Some(span) = &response.answer {
        span.validate_against(context)
            .map_err(|e| GatewayError::Protocol {
                endpoint: "reader".into(),
                message: e.to_string(),
            })?;
    }
    Ok(response)
}

pub fn extract_answer_candidates(
    extractor: &dyn AnswerExtractor,
    passage: &Passage,
    n: usize,
) -> Vec<AnswerSpan> {
    let mut spans = extractor.extract(passage, n);
    let mut seen = HashSet::new();
    spans.retain(|s| seen.insert(normalize_answer(&s.surface)));
    spans.truncate(n);
    spans
}
