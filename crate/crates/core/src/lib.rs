//! Retrieve-generate-filter counterfactual data augmentation for extractive QA.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod filters;
pub mod gateway;
pub mod jsonl;
pub mod pipeline;
pub mod qed;
pub mod seed;
pub mod text;
pub mod types;

pub use error::{Error, Result};
pub use types::{AnswerSpan, CandidateContext, Example, FilterVerdict, GeneratedTriple, Passage, Validate};
