//! Protocol conformance checks, shared by every implementation of
//! [`WireEndpoint`]: the in-process mocks, the bundled mock server and any
//! external model service.

use super::wire::{
    DecomposeRequest, DecomposeResponse, GenerateRequest, GenerateResponse, HealthResponse,
    ReadRequest, ReadResponse, WireContext, WireEndpoint, WireOffsets,
};
use crate::qed::slot_count;
use crate::text::char_slice;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConformanceReport {
    pub outcomes: Vec<CheckOutcome>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.failure.is_none())
    }

    pub fn failures(&self) -> Vec<&CheckOutcome> {
        self.outcomes.iter().filter(|o| o.failure.is_some()).collect()
    }

    fn record(&mut self, name: impl Into<String>, result: Result<(), String>) {
        self.outcomes.push(CheckOutcome {
            name: name.into(),
            failure: result.err(),
        });
    }
}

fn context(body: &str) -> WireContext {
    WireContext {
        title: "Richmond Football Club".into(),
        body: body.into(),
    }
}

const BODY: &str = "The Richmond Football Club is based in Melbourne. \
    Jeff Hogg captained the team in 1994. Zoë Ball presented the trophy.";

/// Fixed generate requests: a name, a year and a non-ASCII answer.
pub fn generate_requests() -> Vec<GenerateRequest> {
    let spans = [(50, 59), (82, 86), (88, 96)];
    spans
        .iter()
        .zip([15, 3, 1])
        .map(|(&(char_start, char_end), num_questions)| GenerateRequest {
            context: context(BODY),
            answer: WireOffsets {
                char_start,
                char_end,
            },
            num_questions,
        })
        .collect()
}

pub fn read_requests() -> Vec<ReadRequest> {
    [
        "who captained the team in 1994",
        "which person presented the trophy",
        "zebra crossing",
    ]
    .iter()
    .map(|q| ReadRequest {
        question: q.to_string(),
        context: context(BODY),
    })
    .collect()
}

pub fn decompose_requests() -> Vec<DecomposeRequest> {
    [
        "who is the captain of Richmond Football Club",
        "who captained the team in 1994",
    ]
    .iter()
    .map(|q| DecomposeRequest {
        question: q.to_string(),
        context: Some(context(BODY)),
        answer: None,
    })
    .collect()
}

pub fn check_generate(req: &GenerateRequest, resp: &GenerateResponse) -> Result<(), String> {
    if resp.questions.len() > req.num_questions {
        return Err(format!(
            "{} questions for num_questions={}",
            resp.questions.len(),
            req.num_questions
        ));
    }
    if resp.generator_id.is_empty() {
        return Err("empty generator_id".into());
    }
    if let Some(q) = resp.questions.iter().find(|q| q.text.trim().is_empty()) {
        return Err(format!("empty question text (score {})", q.score));
    }
    if let Some(w) = resp.questions.windows(2).find(|w| w[1].score > w[0].score) {
        return Err(format!("scores increase: {} then {}", w[0].score, w[1].score));
    }
    Ok(())
}

pub fn check_read(req: &ReadRequest, resp: &ReadResponse) -> Result<(), String> {
    if !resp.score.is_finite() {
        return Err(format!("non-finite score {}", resp.score));
    }
    let Some(span) = &resp.answer else {
        return Ok(());
    };
    let len = req.context.body.chars().count();
    if span.char_start >= span.char_end || span.char_end > len {
        return Err(format!(
            "offsets {}..{} invalid for body of {len} chars",
            span.char_start, span.char_end
        ));
    }
    let actual = char_slice(&req.context.body, span.char_start, span.char_end);
    if actual != span.surface {
        return Err(format!(
            "surface `{}` but body has `{actual}` at {}..{}",
            span.surface, span.char_start, span.char_end
        ));
    }
    Ok(())
}

pub fn check_decompose(resp: &DecomposeResponse) -> Result<(), String> {
    let slots = slot_count(&resp.predicate);
    if slots != resp.references.len() {
        return Err(format!(
            "predicate `{}` has {slots} slots but {} references",
            resp.predicate,
            resp.references.len()
        ));
    }
    Ok(())
}

pub fn check_health(resp: &HealthResponse) -> Result<(), String> {
    if resp.status != "ok" {
        return Err(format!("status `{}`", resp.status));
    }
    Ok(())
}

/// Runs every fixed request against `endpoint` and checks the responses.
pub fn run_conformance(endpoint: &dyn WireEndpoint) -> ConformanceReport {
    let mut report = ConformanceReport::default();
    report.record(
        "health",
        endpoint
            .health()
            .map_err(|e| e.to_string())
            .and_then(|r| check_health(&r)),
    );
    for (i, req) in generate_requests().iter().enumerate() {
        report.record(
            format!("generate[{i}]"),
            endpoint
                .generate(req)
                .map_err(|e| e.to_string())
                .and_then(|r| check_generate(req, &r)),
        );
    }
    for (i, req) in read_requests().iter().enumerate() {
        report.record(
            format!("read[{i}]"),
            endpoint
                .read(req)
                .map_err(|e| e.to_string())
                .and_then(|r| check_read(req, &r)),
        );
    }
    for (i, req) in decompose_requests().iter().enumerate() {
        report.record(
            format!("decompose[{i}]"),
            endpoint
                .decompose(req)
                .map_err(|e| e.to_string())
                .and_then(|r| check_decompose(&r)),
        );
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::wire::{WireQuestion, WireSpan};

    #[test]
    fn fixed_offsets_point_at_answers() {
        let surfaces: Vec<_> = generate_requests()
            .iter()
            .map(|r| char_slice(&r.context.body, r.answer.char_start, r.answer.char_end).to_string())
            .collect();
        assert_eq!(surfaces, ["Jeff Hogg", "1994", "Zoë Ball"]);
    }

    #[test]
    fn checks_catch_violations() {
        let req = &generate_requests()[1];
        let q = |text: &str, score| WireQuestion {
            text: text.into(),
            score,
        };
        let ok = GenerateResponse {
            questions: vec![q("a", 0.0), q("b", -1.0)],
            generator_id: "g".into(),
        };
        assert!(check_generate(req, &ok).is_ok());
        let rising = GenerateResponse {
            questions: vec![q("a", -1.0), q("b", 0.0)],
            ..ok.clone()
        };
        assert!(check_generate(req, &rising).is_err());
        let too_many = GenerateResponse {
            questions: vec![q("a", 0.0); 4],
            ..ok
        };
        assert!(check_generate(req, &too_many).is_err());

        let rreq = &read_requests()[0];
        let bad = ReadResponse {
            answer: Some(WireSpan {
                char_start: 50,
                char_end: 59,
                surface: "Jeff Hog".into(),
            }),
            score: 1.0,
        };
        assert!(check_read(rreq, &bad).is_err());

        let mismatch = DecomposeResponse {
            predicate: "who is X of Y".into(),
            references: vec!["a".into()],
        };
        assert!(check_decompose(&mismatch).is_err());
    }
}
