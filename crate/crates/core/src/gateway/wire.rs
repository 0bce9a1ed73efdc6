//! JSON bodies of the model-service HTTP protocol.
//!
//! ```text
//! POST /v1/generate   GenerateRequest  -> GenerateResponse
//! POST /v1/read       ReadRequest      -> ReadResponse
//! POST /v1/decompose  DecomposeRequest -> DecomposeResponse
//! GET  /v1/health                      -> HealthResponse
//! ```
//!
//! Non-200 responses carry [`ErrorResponse`]. Offsets are code points into
//! `context.body`.

use serde::{Deserialize, Serialize};

use super::{Decomposer, GatewayError, GeneratorRequest, QuestionGenerator, Reader};
use crate::qed::QedDecomposition;
use crate::types::{AnswerSpan, Passage};

pub const GENERATE_PATH: &str = "/v1/generate";
pub const READ_PATH: &str = "/v1/read";
pub const DECOMPOSE_PATH: &str = "/v1/decompose";
pub const HEALTH_PATH: &str = "/v1/health";

/// Passage id used for contexts that arrive over the wire without one.
pub const WIRE_PASSAGE_ID: &str = "wire";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireContext {
    pub title: String,
    pub body: String,
}

impl WireContext {
    pub fn from_passage(p: &Passage) -> Self {
        WireContext {
            title: p.title.clone(),
            body: p.body.clone(),
        }
    }

    pub fn to_passage(&self) -> Passage {
        Passage::new(WIRE_PASSAGE_ID, self.title.clone(), self.body.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireOffsets {
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSpan {
    pub char_start: usize,
    pub char_end: usize,
    pub surface: String,
}

impl From<&AnswerSpan> for WireSpan {
    fn from(s: &AnswerSpan) -> Self {
        WireSpan {
            char_start: s.char_start,
            char_end: s.char_end,
            surface: s.surface.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub context: WireContext,
    pub answer: WireOffsets,
    pub num_questions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireQuestion {
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub questions: Vec<WireQuestion>,
    pub generator_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadRequest {
    pub question: String,
    pub context: WireContext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadResponse {
    pub answer: Option<WireSpan>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeRequest {
    pub question: String,
    pub context: Option<WireContext>,
    pub answer: Option<WireSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeResponse {
    pub predicate: String,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}

/// Serves the protocol from in-process model implementations.
/// Errors are the message for an [`ErrorResponse`].
pub struct LocalService {
    pub model_id: String,
    pub generator: Box<dyn QuestionGenerator>,
    pub reader: Box<dyn Reader>,
    pub decomposer: Box<dyn Decomposer>,
}

impl LocalService {
    pub fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse, String> {
        let passage = req.context.to_passage();
        let answer = passage
            .span(req.answer.char_start, req.answer.char_end)
            .map_err(|e| e.to_string())?;
        let request = GeneratorRequest {
            context: &passage,
            answer: &answer,
            num_questions: req.num_questions,
        };
        let resp = super::generate_questions(self.generator.as_ref(), &request)
            .map_err(|e| e.to_string())?;
        Ok(GenerateResponse {
            questions: resp
                .questions
                .into_iter()
                .map(|q| WireQuestion {
                    text: q.text,
                    score: q.score,
                })
                .collect(),
            generator_id: resp.generator_id,
        })
    }

    pub fn read(&self, req: &ReadRequest) -> Result<ReadResponse, String> {
        let passage = req.context.to_passage();
        let resp = super::read(self.reader.as_ref(), &req.question, &passage)
            .map_err(|e| e.to_string())?;
        Ok(ReadResponse {
            answer: resp.answer.as_ref().map(WireSpan::from),
            score: resp.score,
        })
    }

    pub fn decompose(&self, req: &DecomposeRequest) -> Result<DecomposeResponse, String> {
        let passage = req.context.as_ref().map(WireContext::to_passage);
        let answer = match (&passage, &req.answer) {
            (Some(p), Some(a)) => Some(p.span(a.char_start, a.char_end).map_err(|e| e.to_string())?),
            _ => None,
        };
        let d = self
            .decomposer
            .decompose(&req.question, passage.as_ref(), answer.as_ref())
            .map_err(|e| e.to_string())?;
        Ok(DecomposeResponse {
            predicate: d.predicate,
            references: d.references,
        })
    }

    pub fn health(&self) -> HealthResponse {
        HealthResponse {
            status: "ok".into(),
            model_id: self.model_id.clone(),
        }
    }
}

/// The four protocol operations, served locally or over HTTP.
pub trait WireEndpoint {
    fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse, GatewayError>;
    fn read(&self, req: &ReadRequest) -> Result<ReadResponse, GatewayError>;
    fn decompose(&self, req: &DecomposeRequest) -> Result<DecomposeResponse, GatewayError>;
    fn health(&self) -> Result<HealthResponse, GatewayError>;
}

fn local_err(op: &str) -> impl Fn(String) -> GatewayError + '_ {
    move |message| GatewayError::Transport {
        endpoint: format!("local{op}"),
        status: Some(500),
        message,
    }
}

impl WireEndpoint for LocalService {
    fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse, GatewayError> {
        LocalService::generate(self, req).map_err(local_err(GENERATE_PATH))
    }

    fn read(&self, req: &ReadRequest) -> Result<ReadResponse, GatewayError> {
        LocalService::read(self, req).map_err(local_err(READ_PATH))
    }

    fn decompose(&self, req: &DecomposeRequest) -> Result<DecomposeResponse, GatewayError> {
        LocalService::decompose(self, req).map_err(local_err(DECOMPOSE_PATH))
    }

    fn health(&self) -> Result<HealthResponse, GatewayError> {
        Ok(LocalService::health(self))
    }
}

impl From<DecomposeResponse> for QedDecomposition {
    fn from(r: DecomposeResponse) -> Self {
        QedDecomposition {
            predicate: r.predicate,
            references: r.references,
        }
    }
}
