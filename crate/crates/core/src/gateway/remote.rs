//! Blocking HTTP adapter for a model service speaking the [`wire`] protocol.
//!
//! One client can back every model role; a reader ensemble is a list of
//! clients pointed at different endpoints.

use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::wire::{
    self, DecomposeRequest, DecomposeResponse, ErrorResponse, GenerateRequest, GenerateResponse,
    HealthResponse, ReadRequest, ReadResponse, WireContext, WireEndpoint, WireOffsets, WireSpan,
};
use super::{
    Decomposer, GatewayError, GeneratedQuestion, GeneratorRequest, GeneratorResponse,
    QuestionGenerator, Reader, ReaderResponse,
};
use crate::qed::QedDecomposition;
use crate::types::{AnswerSpan, Passage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteOptions {
    pub timeout_secs: f64,
    pub retries: u32,
    /// First retry delay; doubles on every further attempt.
    pub backoff_ms: u64,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        RemoteOptions {
            timeout_secs: 30.0,
            retries: 3,
            backoff_ms: 250,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteClient {
    base_url: String,
    http: reqwest::blocking::Client,
    options: RemoteOptions,
}

impl RemoteClient {
    pub fn new(base_url: impl Into<String>, options: RemoteOptions) -> Result<Self, GatewayError> {
        let base_url = base_url.into().trim_end_matches('/').to_string();
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(options.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Transport {
                endpoint: base_url.clone(),
                status: None,
                message: e.to_string(),
            })?;
        Ok(RemoteClient {
            base_url,
            http,
            options,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn call<Resp: DeserializeOwned>(
        &self,
        path: &str,
        body: Option<&impl Serialize>,
    ) -> Result<Resp, GatewayError> {
        let endpoint = format!("{}{}", self.base_url, path);
        let mut attempt = 0;
        loop {
            match self.call_once(&endpoint, body) {
                Err(GatewayError::Transport { status, .. })
                    if attempt < self.options.retries
                        && status.is_none_or(|s| s >= 500 || s == 429) =>
                {
                    let delay = self.options.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::debug!("retrying {endpoint} in {delay} ms");
                    thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn call_once<Resp: DeserializeOwned>(
        &self,
        endpoint: &str,
        body: Option<&impl Serialize>,
    ) -> Result<Resp, GatewayError> {
        let transport = |status: Option<u16>, message: String| GatewayError::Transport {
            endpoint: endpoint.to_string(),
            status,
            message,
        };
        let request = match body {
            Some(b) => self.http.post(endpoint).json(b),
            None => self.http.get(endpoint),
        };
        let response = request.send().map_err(|e| transport(None, e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| transport(Some(status), e.to_string()))?;
        if status != 200 {
            let message = serde_json::from_str::<ErrorResponse>(&text)
                .map(|e| e.error)
                .unwrap_or(text);
            return Err(transport(Some(status), message));
        }
        serde_json::from_str(&text).map_err(|e| GatewayError::Protocol {
            endpoint: endpoint.to_string(),
            message: e.to_string(),
        })
    }

    fn protocol_error(&self, path: &str, message: String) -> GatewayError {
        GatewayError::Protocol {
            endpoint: format!("{}{}", self.base_url, path),
            message,
        }
    }
}

impl WireEndpoint for RemoteClient {
    fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse, GatewayError> {
        self.call(wire::GENERATE_PATH, Some(req))
    }

    fn read(&self, req: &ReadRequest) -> Result<ReadResponse, GatewayError> {
        self.call(wire::READ_PATH, Some(req))
    }

    fn decompose(&self, req: &DecomposeRequest) -> Result<DecomposeResponse, GatewayError> {
        self.call(wire::DECOMPOSE_PATH, Some(req))
    }

    fn health(&self) -> Result<HealthResponse, GatewayError> {
        self.call(wire::HEALTH_PATH, None::<&()>)
    }
}

impl QuestionGenerator for RemoteClient {
    fn generate(&self, request: &GeneratorRequest<'_>) -> Result<GeneratorResponse, GatewayError> {
        let body = GenerateRequest {
            context: WireContext::from_passage(request.context),
            answer: WireOffsets {
                char_start: request.answer.char_start,
                char_end: request.answer.char_end,
            },
            num_questions: request.num_questions,
        };
        let resp = WireEndpoint::generate(self, &body)?;
        if resp.questions.len() > request.num_questions {
            return Err(self.protocol_error(
                wire::GENERATE_PATH,
                format!(
                    "{} questions returned for num_questions={}",
                    resp.questions.len(),
                    request.num_questions
                ),
            ));
        }
        Ok(GeneratorResponse {
            questions: resp
                .questions
                .into_iter()
                .map(|q| GeneratedQuestion {
                    text: q.text,
                    score: q.score,
                })
                .collect(),
            generator_id: resp.generator_id,
        })
    }
}

impl Reader for RemoteClient {
    fn read(&self, question: &str, context: &Passage) -> Result<ReaderResponse, GatewayError> {
        let body = ReadRequest {
            question: question.to_string(),
            context: WireContext::from_passage(context),
        };
        let resp = WireEndpoint::read(self, &body)?;
        let answer = match resp.answer {
            None => None,
            Some(w) => {
                let span = context
                    .span(w.char_start, w.char_end)
                    .map_err(|e| self.protocol_error(wire::READ_PATH, e.to_string()))?;
                if span.surface != w.surface {
                    return Err(self.protocol_error(
                        wire::READ_PATH,
                        format!(
                            "surface `{}` does not match body at {}..{}",
                            w.surface, w.char_start, w.char_end
                        ),
                    ));
                }
                Some(span)
            }
        };
        Ok(ReaderResponse {
            answer,
            score: resp.score,
        })
    }
}

impl Decomposer for RemoteClient {
    fn decompose(
        &self,
        question: &str,
        context: Option<&Passage>,
        answer: Option<&AnswerSpan>,
    ) -> Result<QedDecomposition, GatewayError> {
        let body = DecomposeRequest {
            question: question.to_string(),
            context: context.map(WireContext::from_passage),
            answer: answer.map(WireSpan::from),
        };
        Ok(WireEndpoint::decompose(self, &body)?.into())
    }
}
