//! Text normalization, tokenization and answer matching.
//!
//! Everything here operates on Unicode scalar values. There is no stemming
//! and no lemmatization, so exact-match results stay predictable.

use std::collections::HashMap;

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Punctuation is any character that is neither alphanumeric nor whitespace.
pub fn is_punctuation(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// SQuAD-style answer normalization.
///
/// Lowercases, deletes punctuation characters, drops the articles
/// "a", "an" and "the" as whole tokens and collapses whitespace.
/// The function is idempotent.
pub fn normalize_answer(text: &str) -> String {
    let lowered: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !is_punctuation(*c))
        .collect();
    lowered
        .split_whitespace()
        .filter(|tok| !ARTICLES.contains(tok))
        .collect::<Vec<_>>()
        .join(" ")
}

/// A word token with its code-point offsets into the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

/// Tokenizes `text` and keeps code-point offsets of every token.
///
/// Offsets cover the token after leading and trailing punctuation have been
/// stripped, before lowercasing.
pub fn tokenize_with_spans(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let raw_start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        let mut start = raw_start;
        let mut end = i;
        while start < end && is_punctuation(chars[start]) {
            start += 1;
        }
        while end > start && is_punctuation(chars[end - 1]) {
            end -= 1;
        }
        if start < end {
            let text: String = chars[start..end].iter().collect();
            tokens.push(Token {
                text: text.to_lowercase(),
                char_start: start,
                char_end: end,
            });
        }
    }
    tokens
}

/// Splits on whitespace, strips leading/trailing punctuation per token,
/// drops empty tokens and lowercases.
pub fn tokenize_words(text: &str) -> Vec<String> {
    tokenize_with_spans(text)
        .into_iter()
        .map(|t| t.text)
        .collect()
}

/// Levenshtein distance over token sequences with unit costs.
pub fn word_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(x != y);
            curr[j + 1] = substitution.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Word-level edit distance between two questions.
pub fn question_distance(q: &str, q_prime: &str) -> usize {
    word_edit_distance(&tokenize_words(q), &tokenize_words(q_prime))
}

/// True iff the normalized prediction equals any normalized gold alias.
pub fn answers_match<S: AsRef<str>>(predicted: &str, gold_answers: &[S]) -> bool {
    let predicted = normalize_answer(predicted);
    gold_answers
        .iter()
        .any(|g| normalize_answer(g.as_ref()) == predicted)
}

/// SQuAD token-overlap F1, maximized over gold aliases.
pub fn token_f1<S: AsRef<str>>(predicted: &str, gold_answers: &[S]) -> f64 {
    let predicted = normalize_answer(predicted);
    let pred_tokens: Vec<&str> = predicted.split_whitespace().collect();
    gold_answers
        .iter()
        .map(|g| {
            let gold = normalize_answer(g.as_ref());
            let gold_tokens: Vec<&str> = gold.split_whitespace().collect();
            f1_tokens(&pred_tokens, &gold_tokens)
        })
        .fold(0.0, f64::max)
}

fn f1_tokens(pred: &[&str], gold: &[&str]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred == gold { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Code-point offset to byte offset. Offsets past the end clamp to `text.len()`.
pub(crate) fn char_to_byte(text: &str, char_idx: usize) -> usize {
    text.char_indices()
        .nth(char_idx)
        .map(|(b, _)| b)
        .unwrap_or(text.len())
}

/// Substring by code-point range.
pub fn char_slice(text: &str, char_start: usize, char_end: usize) -> &str {
    let start = char_to_byte(text, char_start);
    let end = char_to_byte(text, char_end);
    &text[start..end.max(start)]
}
