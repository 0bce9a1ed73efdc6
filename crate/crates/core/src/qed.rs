//! Question decomposition into a predicate template plus reference phrases,
//! and the perturbation categories derived from comparing two decompositions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{Decomposer, GatewayError};
use crate::text::{normalize_answer, tokenize_with_spans, tokenize_words};
use crate::types::{AnswerSpan, Example, GeneratedTriple, Passage, Validate};

/// Predicate prefixes longer than this many characters count as a match.
pub const PREDICATE_PREFIX_CHARS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QedDecomposition {
    /// Question text with each reference replaced by a slot variable.
    pub predicate: String,
    /// Reference phrases in slot order.
    pub references: Vec<String>,
}

/// Slot variable for the `i`-th reference: X, Y, Z, then X4, X5, ...
pub fn slot_name(i: usize) -> String {
    match i {
        0 => "X".into(),
        1 => "Y".into(),
        2 => "Z".into(),
        n => format!("X{}", n + 1),
    }
}

fn as_slot(token: &str) -> Option<&str> {
    let t = token.trim_matches(|c: char| !c.is_alphanumeric());
    let is_slot = matches!(t, "X" | "Y" | "Z")
        || (t.len() > 1 && t.starts_with('X') && t[1..].chars().all(|c| c.is_ascii_digit()));
    is_slot.then_some(t)
}

/// Number of slot occurrences in a predicate template.
pub fn slot_count(predicate: &str) -> usize {
    predicate.split_whitespace().filter(|t| as_slot(t).is_some()).count()
}

/// Canonical predicate: slots renamed by first appearance, lowercased,
/// whitespace collapsed, trailing question marks removed.
pub fn canonical_predicate(predicate: &str) -> String {
    let mut renames: HashMap<String, String> = HashMap::new();
    let tokens: Vec<String> = predicate
        .split_whitespace()
        .map(|tok| match as_slot(tok) {
            Some(slot) => {
                let next = slot_name(renames.len());
                let new = renames.entry(slot.to_string()).or_insert(next).clone();
                tok.replacen(slot, &new, 1).to_lowercase()
            }
            None => tok.to_lowercase(),
        })
        .collect();
    tokens
        .join(" ")
        .trim_end_matches(|c: char| c == '?' || c.is_whitespace())
        .to_string()
}

/// Predicates match when their canonical forms are equal or share a prefix
/// of more than [`PREDICATE_PREFIX_CHARS`] characters.
pub fn predicates_equal(a: &QedDecomposition, b: &QedDecomposition) -> bool {
    predicate_texts_equal(&a.predicate, &b.predicate)
}

pub fn predicate_texts_equal(a: &str, b: &str) -> bool {
    let a = canonical_predicate(a);
    let b = canonical_predicate(b);
    if a == b {
        return true;
    }
    let common = a
        .chars()
        .zip(b.chars())
        .take_while(|(x, y)| x == y)
        .count();
    common > PREDICATE_PREFIX_CHARS
}

fn reference_counts(d: &QedDecomposition) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for r in &d.references {
        *counts.entry(normalize_answer(r)).or_default() += 1;
    }
    counts
}

/// Multiset equality of normalized references.
pub fn references_equal(a: &QedDecomposition, b: &QedDecomposition) -> bool {
    reference_counts(a) == reference_counts(b)
}

/// True iff every normalized reference of `old` occurs in `new`, with multiplicity.
pub fn references_superset(new: &QedDecomposition, old: &QedDecomposition) -> bool {
    let have = reference_counts(new);
    reference_counts(old)
        .iter()
        .all(|(r, n)| have.get(r).is_some_and(|m| m >= n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationCategory {
    ReferenceChange,
    PredicateChange,
    Both,
    #[serde(rename = "none")]
    NoChange,
}

impl PerturbationCategory {
    pub const ALL: [PerturbationCategory; 4] = [
        PerturbationCategory::ReferenceChange,
        PerturbationCategory::PredicateChange,
        PerturbationCategory::Both,
        PerturbationCategory::NoChange,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationCategory::ReferenceChange => "reference_change",
            PerturbationCategory::PredicateChange => "predicate_change",
            PerturbationCategory::Both => "both",
            PerturbationCategory::NoChange => "none",
        }
    }
}

impl std::str::FromStr for PerturbationCategory {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        PerturbationCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category `{s}` (expected reference_change|predicate_change|both|none)"))
    }
}

impl fmt::Display for PerturbationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Category of the change from `original` to `counterfactual`.
pub fn categorize(original: &QedDecomposition, counterfactual: &QedDecomposition) -> PerturbationCategory {
    if predicates_equal(original, counterfactual) {
        if references_equal(original, counterfactual) {
            PerturbationCategory::NoChange
        } else {
            PerturbationCategory::ReferenceChange
        }
    } else if references_superset(counterfactual, original) {
        PerturbationCategory::PredicateChange
    } else {
        PerturbationCategory::Both
    }
}

/// One side of a question pair: the question and its optional grounding.
#[derive(Debug, Clone, Copy)]
pub struct QuestionInContext<'a> {
    pub question: &'a str,
    pub context: Option<&'a Passage>,
    pub answer: Option<&'a AnswerSpan>,
}

impl<'a> QuestionInContext<'a> {
    pub fn bare(question: &'a str) -> Self {
        QuestionInContext {
            question,
            context: None,
            answer: None,
        }
    }
}

pub fn categorize_pair(
    original: QuestionInContext<'_>,
    counterfactual: QuestionInContext<'_>,
    decomposer: &dyn Decomposer,
) -> Result<PerturbationCategory, GatewayError> {
    let d0 = decomposer.decompose(original.question, original.context, original.answer)?;
    let d1 = decomposer.decompose(
        counterfactual.question,
        counterfactual.context,
        counterfactual.answer,
    )?;
    Ok(categorize(&d0, &d1))
}

/// Reference phrases for the heuristic decomposer.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    /// Tokenized phrases, longest first.
    phrases: Vec<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GazetteerLine {
    Phrase(String),
    Object { phrase: String },
}

impl Gazetteer {
    pub fn new<S: AsRef<str>>(phrases: impl IntoIterator<Item = S>) -> Self {
        let mut phrases: Vec<Vec<String>> = phrases
            .into_iter()
            .map(|p| tokenize_words(p.as_ref()))
            .filter(|t| !t.is_empty())
            .collect();
        phrases.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        phrases.dedup();
        Gazetteer { phrases }
    }

    /// Reads JSONL where each line is a JSON string or `{"phrase": ...}`.
    pub fn parse<R: Read>(reader: R, source_name: &str) -> Result<Self> {
        let mut phrases = Vec::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let record_err = |message: String| Error::Record {
                source_name: source_name.to_string(),
                line: idx + 1,
                message,
            };
            let line = line.map_err(|e| record_err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: GazetteerLine =
                serde_json::from_str(&line).map_err(|e| record_err(e.to_string()))?;
            phrases.push(match entry {
                GazetteerLine::Phrase(p) | GazetteerLine::Object { phrase: p } => p,
            });
        }
        Ok(Gazetteer::new(phrases))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Gazetteer::parse(file, &path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    fn longest_match(&self, tokens: &[String]) -> usize {
        self.phrases
            .iter()
            .find(|p| tokens.starts_with(p))
            .map_or(0, Vec::len)
    }
}

/// Capitalized words that never start a reference.
const FUNCTION_WORDS: [&str; 24] = [
    "who", "whom", "whose", "what", "when", "where", "which", "why", "how", "name", "is", "are",
    "was", "were", "did", "does", "do", "in", "on", "the", "a", "an", "of", "i",
];

/// Gazetteer-plus-capitalization decomposer.
///
/// Scans left to right. At each token the longest gazetteer phrase wins;
/// otherwise a run of capitalized tokens (excluding function words) becomes a
/// reference. References are replaced by X, Y, Z in order of appearance.
#[derive(Debug, Clone, Default)]
pub struct HeuristicDecomposer {
    pub gazetteer: Gazetteer,
}

impl HeuristicDecomposer {
    pub fn new(gazetteer: Gazetteer) -> Self {
        HeuristicDecomposer { gazetteer }
    }

    pub fn decompose_question(&self, question: &str) -> QedDecomposition {
        let spans = tokenize_with_spans(question);
        let chars: Vec<char> = question.chars().collect();
        let tokens: Vec<String> = spans.iter().map(|t| t.text.clone()).collect();
        let capitalized = |i: usize| {
            chars[spans[i].char_start].is_uppercase()
                && !FUNCTION_WORDS.contains(&tokens[i].as_str())
        };
        let mut predicate = Vec::new();
        let mut references = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let mut len = self.gazetteer.longest_match(&tokens[i..]);
            if len == 0 && capitalized(i) {
                len = 1;
                while i + len < tokens.len() && capitalized(i + len) {
                    len += 1;
                }
            }
            if len == 0 {
                predicate.push(tokens[i].clone());
                i += 1;
            } else {
                predicate.push(slot_name(references.len()));
                references.push(tokens[i..i + len].join(" "));
                i += len;
            }
        }
        QedDecomposition {
            predicate: predicate.join(" "),
            references,
        }
    }
}

impl Decomposer for HeuristicDecomposer {
    fn decompose(
        &self,
        question: &str,
        _context: Option<&Passage>,
        _answer: Option<&AnswerSpan>,
    ) -> Result<QedDecomposition, GatewayError> {
        Ok(self.decompose_question(question))
    }
}

/// Substitutes references back into the slots of a decomposition.
pub fn reconstruct(d: &QedDecomposition) -> String {
    d.predicate
        .split_whitespace()
        .map(|tok| match as_slot(tok) {
            Some(slot) => {
                let idx = (0..d.references.len())
                    .find(|&i| slot_name(i) == slot)
                    .unwrap_or(usize::MAX);
                d.references
                    .get(idx)
                    .cloned()
                    .unwrap_or_else(|| tok.to_string())
            }
            None => tok.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// An (original, counterfactual) pair with its perturbation category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRecord {
    pub pair_id: String,
    pub original: Example,
    pub counterfactual: GeneratedTriple,
    pub category: PerturbationCategory,
}

impl Validate for PairedRecord {
    fn validate(&self) -> Result<()> {
        self.original.validate()?;
        self.counterfactual.validate()?;
        if self.counterfactual.source_example_id != self.original.example_id {
            return Err(Error::PairMismatch(
                self.pair_id.clone(),
                format!(
                    "counterfactual source `{}` is not original `{}`",
                    self.counterfactual.source_example_id, self.original.example_id
                ),
            ));
        }
        Ok(())
    }
}

pub fn pair_id(original: &Example, triple: &GeneratedTriple) -> String {
    format!("{}::{}", original.example_id, triple.triple_id)
}

/// Pairs each triple with its original and keeps those whose category is
/// `category` (reference or predicate change). Output is sorted by source
/// example id, then triple id. Pairs that fail to decompose are skipped.
pub fn build_paired_eval(
    originals: &[Example],
    triples: &[GeneratedTriple],
    decomposer: &dyn Decomposer,
    category: PerturbationCategory,
) -> Result<Vec<PairedRecord>> {
    if !matches!(
        category,
        PerturbationCategory::ReferenceChange | PerturbationCategory::PredicateChange
    ) {
        return Err(Error::Usage(format!(
            "paired sets are built for reference_change or predicate_change, not {category}"
        )));
    }
    let by_id: HashMap<&str, &Example> = originals
        .iter()
        .map(|e| (e.example_id.as_str(), e))
        .collect();
    let mut pairs: Vec<PairedRecord> = triples
        .par_iter()
        .filter_map(|t| {
            let Some(original) = by_id.get(t.source_example_id.as_str()) else {
                log::warn!("triple {}: unknown source example {}", t.triple_id, t.source_example_id);
                return None;
            };
            let found = categorize_pair(
                QuestionInContext {
                    question: &original.question,
                    context: Some(&original.context),
                    answer: original.gold_span.as_ref(),
                },
                QuestionInContext {
                    question: &t.question,
                    context: Some(&t.context),
                    answer: Some(&t.answer),
                },
                decomposer,
            );
            match found {
                Ok(c) if c == category => Some(PairedRecord {
                    pair_id: pair_id(original, t),
                    original: (*original).clone(),
                    counterfactual: t.clone(),
                    category: c,
                }),
                Ok(_) => None,
                Err(e) => {
                    log::warn!("triple {}: categorization failed: {e}", t.triple_id);
                    None
                }
            }
        })
        .collect();
    pairs.sort_by(|a, b| {
        a.original
            .example_id
            .cmp(&b.original.example_id)
            .then_with(|| a.counterfactual.triple_id.cmp(&b.counterfactual.triple_id))
    });
    Ok(pairs)
}
