//! Deterministic offline stand-ins for the learned models.
//!
//! The cloze generator blanks the answer out of its host sentence and puts a
//! wh-phrase in its place. The cloze reader inverts that transformation, so a
//! generated question read against its own passage yields the original span.

use std::collections::HashSet;

use super::{
    AnswerExtractor, GatewayError, GeneratedQuestion, GeneratorRequest, GeneratorResponse,
    QuestionGenerator, Reader, ReaderResponse,
};
use crate::seed::stable_hash;
use crate::text::{is_punctuation, normalize_answer, tokenize_words};
use crate::types::{AnswerSpan, Passage};

pub const CLOZE_GENERATOR_ID: &str = "cloze-mock";

const PERSON_PHRASES: [&str; 5] = [
    "who",
    "which person",
    "name the person that",
    "which individual",
    "who exactly",
];
const TIME_PHRASES: [&str; 5] = ["when", "what year", "in what year", "which year", "at what time"];
const THING_PHRASES: [&str; 5] = ["what", "which thing", "name the thing that", "what exactly", "which one"];

/// Crude answer type that picks the wh-phrase family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerKind {
    Person,
    Time,
    Thing,
}

impl AnswerKind {
    pub fn of(surface: &str) -> Self {
        let first = surface.trim().chars().find(|c| c.is_alphanumeric());
        if first.is_some_and(char::is_uppercase) {
            AnswerKind::Person
        } else if surface.chars().any(|c| c.is_ascii_digit()) {
            AnswerKind::Time
        } else {
            AnswerKind::Thing
        }
    }

    pub fn phrases(self) -> &'static [&'static str] {
        match self {
            AnswerKind::Person => &PERSON_PHRASES,
            AnswerKind::Time => &TIME_PHRASES,
            AnswerKind::Thing => &THING_PHRASES,
        }
    }
}

/// Every wh-phrase, longest first.
fn phrases_longest_first() -> Vec<&'static str> {
    let mut all: Vec<&str> = PERSON_PHRASES
        .iter()
        .chain(TIME_PHRASES.iter())
        .chain(THING_PHRASES.iter())
        .copied()
        .collect();
    all.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    all
}

/// Sentence ranges (code points) of `body`. A sentence ends at a period that
/// is followed by whitespace, or at the end of the text.
pub fn sentence_ranges(body: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = body.chars().collect();
    let mut ranges = Vec::new();
    let mut start = 0;
    let skip_ws = |mut i: usize| {
        while i < chars.len() && chars[i].is_whitespace() {
            i += 1;
        }
        i
    };
    start = skip_ws(start);
    let mut i = start;
    while i < chars.len() {
        if chars[i] == '.' && i + 1 < chars.len() && chars[i + 1].is_whitespace() {
            ranges.push((start, i + 1));
            start = skip_ws(i + 1);
            i = start;
        } else {
            i += 1;
        }
    }
    let mut end = chars.len();
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    if start < end {
        ranges.push((start, end));
    }
    ranges
}

/// The sentence (or run of sentences) covering `span`.
pub fn host_sentence(body: &str, span: &AnswerSpan) -> (usize, usize) {
    let ranges = sentence_ranges(body);
    let start = ranges
        .iter()
        .find(|(_, e)| span.char_start < *e)
        .map(|(s, _)| (*s).min(span.char_start))
        .unwrap_or(span.char_start);
    let end = ranges
        .iter()
        .find(|(_, e)| span.char_end <= *e)
        .map(|(_, e)| (*e).max(span.char_end))
        .unwrap_or(span.char_end);
    (start, end)
}

/// Lowercased, whitespace-collapsed, trimmed text. The second vector maps
/// each output char to the index of its source char in `chars`.
fn canonical(chars: &[char]) -> (String, Vec<usize>) {
    let mut out = String::new();
    let mut origins = Vec::new();
    let mut pending_space = false;
    for (i, c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            origins.push(i);
            pending_space = false;
        }
        for lc in c.to_lowercase() {
            out.push(lc);
            origins.push(i);
        }
    }
    (out, origins)
}

fn strip_terminal(chars: &[char]) -> &[char] {
    let mut end = chars.len();
    while end > 0 && (chars[end - 1].is_whitespace() || matches!(chars[end - 1], '.' | '?' | '!')) {
        end -= 1;
    }
    &chars[..end]
}

fn compose(left: &str, phrase: &str, right: &str) -> String {
    [left, phrase, right]
        .iter()
        .filter(|s| !s.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Cloze question generator.
#[derive(Debug, Clone, Default)]
pub struct ClozeGenerator;

impl ClozeGenerator {
    pub fn questions_for(&self, context: &Passage, answer: &AnswerSpan, n: usize) -> Vec<String> {
        let chars: Vec<char> = context.body.chars().collect();
        let (hs, he) = host_sentence(&context.body, answer);
        let (left, _) = canonical(&chars[hs..answer.char_start]);
        let (right, _) = canonical(strip_terminal(&chars[answer.char_end..he]));
        AnswerKind::of(&answer.surface)
            .phrases()
            .iter()
            .take(n)
            .map(|p| compose(&left, p, &right))
            .collect()
    }
}

impl QuestionGenerator for ClozeGenerator {
    fn generate(&self, request: &GeneratorRequest<'_>) -> Result<GeneratorResponse, GatewayError> {
        let questions = self
            .questions_for(request.context, request.answer, request.num_questions)
            .into_iter()
            .enumerate()
            .map(|(i, text)| GeneratedQuestion {
                text,
                score: -(i as f64),
            })
            .collect();
        Ok(GeneratorResponse {
            questions,
            generator_id: CLOZE_GENERATOR_ID.to_string(),
        })
    }
}

/// Reader that inverts cloze questions, falling back to the best
/// token-overlapping sentence.
///
/// Fallback answers are the first extractor candidate in that sentence whose
/// tokens are not all already in the question. Sentence ties go to the
/// earlier sentence.
#[derive(Debug, Clone, Default)]
pub struct ClozeReader;

impl ClozeReader {
    fn invert(&self, question: &str, context: &Passage) -> Option<AnswerSpan> {
        let q_chars: Vec<char> = question.chars().collect();
        let (q, _) = canonical(strip_terminal(&q_chars));
        let body: Vec<char> = context.body.chars().collect();
        let phrases = phrases_longest_first();
        for (ss, se) in sentence_ranges(&context.body) {
            let sentence = strip_terminal(&body[ss..se]);
            let (cs, origins) = canonical(sentence);
            // "in what year" also contains "what year"; keep the tightest span.
            let mut best: Option<AnswerSpan> = None;
            for phrase in &phrases {
                for (pos, _) in q.match_indices(phrase) {
                    let end = pos + phrase.len();
                    let bounded = (pos == 0 || q.as_bytes()[pos - 1] == b' ')
                        && (end == q.len() || q.as_bytes()[end] == b' ');
                    if !bounded {
                        continue;
                    }
                    let left = q[..pos].trim_end();
                    let right = q[end..].trim_start();
                    if left.len() + right.len() >= cs.len()
                        || !cs.starts_with(left)
                        || !cs.ends_with(right)
                    {
                        continue;
                    }
                    let middle = &cs[left.len()..cs.len() - right.len()];
                    let lead = middle.len() - middle.trim_start().len();
                    let trimmed = middle.trim();
                    if trimmed.is_empty() {
                        continue;
                    }
                    let b_start = left.len() + lead;
                    let c_start = cs[..b_start].chars().count();
                    let c_end = c_start + trimmed.chars().count();
                    let start = ss + origins[c_start];
                    let end = ss + origins[c_end - 1] + 1;
                    if let Ok(span) = context.span(start, end) {
                        if best.as_ref().is_none_or(|b| span.char_len() < b.char_len()) {
                            best = Some(span);
                        }
                    }
                }
            }
            if best.is_some() {
                return best;
            }
        }
        None
    }

    fn overlap_fallback(&self, question: &str, context: &Passage) -> Option<(AnswerSpan, f64)> {
        let q_tokens: HashSet<String> = tokenize_words(question).into_iter().collect();
        if q_tokens.is_empty() {
            return None;
        }
        let chars: Vec<char> = context.body.chars().collect();
        let mut best: Option<((usize, usize), usize)> = None;
        for (ss, se) in sentence_ranges(&context.body) {
            let text: String = chars[ss..se].iter().collect();
            let overlap = tokenize_words(&text)
                .into_iter()
                .collect::<HashSet<_>>()
                .intersection(&q_tokens)
                .count();
            if overlap > 0 && best.is_none_or(|(_, b)| overlap > b) {
                best = Some(((ss, se), overlap));
            }
        }
        let ((ss, se), overlap) = best?;
        let answer = candidate_spans(context, ss, se)
            .into_iter()
            .find(|span| {
                !tokenize_words(&span.surface)
                    .iter()
                    .all(|t| q_tokens.contains(t))
            })?;
        Some((answer, 0.5 * overlap as f64 / q_tokens.len() as f64))
    }
}

impl Reader for ClozeReader {
    fn read(&self, question: &str, context: &Passage) -> Result<ReaderResponse, GatewayError> {
        if let Some(answer) = self.invert(question, context) {
            return Ok(ReaderResponse {
                answer: Some(answer),
                score: 1.0,
            });
        }
        Ok(match self.overlap_fallback(question, context) {
            Some((answer, score)) => ReaderResponse {
                answer: Some(answer),
                score,
            },
            None => ReaderResponse::none(),
        })
    }
}

/// Wraps a reader and deterministically abstains on a `noise` fraction of
/// (question, passage) inputs. Different seeds abstain on different inputs.
pub struct NoisyReader<R> {
    inner: R,
    seed: u64,
    noise: f64,
}

impl<R: Reader> NoisyReader<R> {
    pub fn new(inner: R, seed: u64, noise: f64) -> Self {
        NoisyReader { inner, seed, noise }
    }
}

impl<R: Reader> Reader for NoisyReader<R> {
    fn read(&self, question: &str, context: &Passage) -> Result<ReaderResponse, GatewayError> {
        let h = stable_hash(self.seed, &[question, &context.passage_id]);
        if (h as f64 / u64::MAX as f64) < self.noise {
            return Ok(ReaderResponse::none());
        }
        self.inner.read(question, context)
    }
}

/// Returns the same response for every input. Useful for voting tests.
#[derive(Debug, Clone)]
pub struct FixedReader(pub ReaderResponse);

impl Reader for FixedReader {
    fn read(&self, _question: &str, _context: &Passage) -> Result<ReaderResponse, GatewayError> {
        Ok(self.0.clone())
    }
}

struct WordToken {
    start: usize,
    end: usize,
    capitalized: bool,
    year: bool,
    /// Punctuation stripped from the front of the raw token.
    lead_punct: bool,
    /// Punctuation stripped from the back of the raw token.
    trail_punct: bool,
}

fn word_tokens(chars: &[char], from: usize, to: usize) -> Vec<WordToken> {
    let mut out = Vec::new();
    let mut i = from;
    while i < to {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let raw_start = i;
        while i < to && !chars[i].is_whitespace() {
            i += 1;
        }
        let (mut s, mut e) = (raw_start, i);
        while s < e && is_punctuation(chars[s]) {
            s += 1;
        }
        while e > s && is_punctuation(chars[e - 1]) {
            e -= 1;
        }
        if s == e {
            continue;
        }
        let word = &chars[s..e];
        out.push(WordToken {
            start: s,
            end: e,
            capitalized: word[0].is_uppercase(),
            year: word.len() == 4 && word.iter().all(|c| c.is_ascii_digit()),
            lead_punct: s > raw_start,
            trail_punct: e < i,
        });
    }
    out
}

/// Candidate spans within body[from..to] in extractor order: capitalized runs
/// of two or more tokens, then 4-digit years, then lone capitalized tokens.
/// Document order within each class; duplicate normalized surfaces dropped.
fn candidate_spans(passage: &Passage, from: usize, to: usize) -> Vec<AnswerSpan> {
    let chars: Vec<char> = passage.body.chars().collect();
    let tokens = word_tokens(&chars, from, to);
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut unigrams: Vec<(usize, usize)> = Vec::new();
    let mut years: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i].year {
            years.push((tokens[i].start, tokens[i].end));
        }
        if !tokens[i].capitalized {
            i += 1;
            continue;
        }
        let first = i;
        while !tokens[i].trail_punct
            && i + 1 < tokens.len()
            && tokens[i + 1].capitalized
            && !tokens[i + 1].lead_punct
        {
            i += 1;
        }
        let span = (tokens[first].start, tokens[i].end);
        if i > first {
            runs.push(span);
        } else {
            unigrams.push(span);
        }
        i += 1;
    }
    let mut seen = HashSet::new();
    runs.into_iter()
        .chain(years)
        .chain(unigrams)
        .filter_map(|(s, e)| passage.span(s, e).ok())
        .filter(|span| {
            let key = normalize_answer(&span.surface);
            !key.is_empty() && seen.insert(key)
        })
        .collect()
}

/// Heuristic answer-candidate extractor over the whole passage.
#[derive(Debug, Clone, Default)]
pub struct HeuristicExtractor;

impl AnswerExtractor for HeuristicExtractor {
    fn extract(&self, passage: &Passage, n: usize) -> Vec<AnswerSpan> {
        let mut spans = candidate_spans(passage, 0, passage.char_len());
        spans.truncate(n);
        spans
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{extract_answer_candidates, generate_questions, read};

    fn passage(body: &str) -> Passage {
        Passage::new("p", "t", body)
    }

    fn span_of(p: &Passage, needle: &str) -> AnswerSpan {
        let byte = p.body.find(needle).unwrap();
        let start = p.body[..byte].chars().count();
        p.span(start, start + needle.chars().count()).unwrap()
    }

    #[test]
    fn sentences_split_on_period_space() {
        let body = "First one. Second one.  Third";
        let r = sentence_ranges(body);
        assert_eq!(r, vec![(0, 10), (11, 22), (24, 29)]);
        assert!(sentence_ranges("   ").is_empty());
    }

    #[test]
    fn cloze_generator_pinned_output() {
        let p = passage("Richmond had many captains. Jeff Hogg captained the team in 1994. He retired.");
        let a = span_of(&p, "Jeff Hogg");
        let req = GeneratorRequest {
            context: &p,
            answer: &a,
            num_questions: 3,
        };
        let resp = generate_questions(&ClozeGenerator, &req).unwrap();
        let texts: Vec<_> = resp.questions.iter().map(|q| q.text.as_str()).collect();
        assert_eq!(
            texts,
            [
                "who captained the team in 1994",
                "which person captained the team in 1994",
                "name the person that captained the team in 1994",
            ]
        );
        assert_eq!(resp.generator_id, CLOZE_GENERATOR_ID);

        let one = generate_questions(&ClozeGenerator, &GeneratorRequest { num_questions: 1, ..req }).unwrap();
        assert_eq!(one.questions.len(), 1);
        assert_eq!(one.questions[0].text, "who captained the team in 1994");
    }

    #[test]
    fn cloze_of_bare_answer_sentence() {
        let p = passage("Jeff Hogg. Later text here.");
        let a = span_of(&p, "Jeff Hogg");
        let req = GeneratorRequest {
            context: &p,
            answer: &a,
            num_questions: 1,
        };
        let resp = generate_questions(&ClozeGenerator, &req).unwrap();
        assert_eq!(resp.questions[0].text, "who");
        let r = read(&ClozeReader, "who", &p).unwrap();
        assert_eq!(r.answer.unwrap().surface, "Jeff Hogg");
    }

    #[test]
    fn year_and_thing_answers() {
        let p = passage("The club won the flag in 1994.");
        let year = span_of(&p, "1994");
        let q = ClozeGenerator.questions_for(&p, &year, 2);
        assert_eq!(q, ["the club won the flag in when", "the club won the flag in what year"]);
        let thing = span_of(&p, "flag");
        assert_eq!(
            ClozeGenerator.questions_for(&p, &thing, 1),
            ["the club won the what in 1994"]
        );
    }

    #[test]
    fn reader_inverts_every_beam() {
        let p = passage("Jeff Hogg captained the team in 1994. Steve Morris coached the reserves.");
        for needle in ["Jeff Hogg", "1994", "team", "Steve Morris", "reserves"] {
            let a = span_of(&p, needle);
            for q in ClozeGenerator.questions_for(&p, &a, 15) {
                let r = read(&ClozeReader, &q, &p).unwrap();
                assert_eq!(r.answer.as_ref(), Some(&a), "question {q:?}");
            }
        }
    }

    #[test]
    fn reader_no_overlap_is_none() {
        let p = passage("Jeff Hogg captained the team in 1994.");
        assert_eq!(read(&ClozeReader, "zebra stripes", &p).unwrap().answer, None);
    }

    #[test]
    fn reader_prefers_earlier_sentence_on_tie() {
        let p = passage("Jeff Hogg captained the team. Jeff Hogg captained the team.");
        let r = read(&ClozeReader, "who captained the team", &p).unwrap();
        let a = r.answer.unwrap();
        assert_eq!((a.char_start, a.char_end), (0, 9));

        let p = passage("Jeff Hogg played. Steve Morris played.");
        let a = read(&ClozeReader, "who played in the team", &p).unwrap().answer.unwrap();
        assert_eq!(a.surface, "Jeff Hogg");
    }

    #[test]
    fn reader_fallback_picks_entity_not_in_question() {
        let p = passage("Steve Morris captained Richmond Football Club in 1998.");
        let r = read(&ClozeReader, "who captained richmond football club in 1994", &p).unwrap();
        assert_eq!(r.answer.unwrap().surface, "Steve Morris");
        assert!(r.score > 0.0 && r.score < 1.0);
    }

    #[test]
    fn extractor_orders_classes() {
        let p = passage("the club hired Jeff Hogg and Steve Morris in 1994.");
        let spans = extract_answer_candidates(&HeuristicExtractor, &p, 5);
        let surfaces: Vec<_> = spans.iter().map(|s| s.surface.as_str()).collect();
        assert_eq!(surfaces, ["Jeff Hogg", "Steve Morris", "1994"]);
        assert_eq!(extract_answer_candidates(&HeuristicExtractor, &p, 1).len(), 1);
        assert!(extract_answer_candidates(&HeuristicExtractor, &passage("no names here at all."), 5).is_empty());
    }

    #[test]
    fn extractor_breaks_runs_at_punctuation() {
        let p = passage("He joined Richmond Football Club. The Tigers won, Hogg said (Jeff Hogg).");
        let surfaces: Vec<_> = HeuristicExtractor
            .extract(&p, 10)
            .into_iter()
            .map(|s| s.surface)
            .collect();
        assert_eq!(
            surfaces,
            ["Richmond Football Club", "The Tigers", "Jeff Hogg", "He", "Hogg"]
        );
    }

    #[test]
    fn noisy_reader_is_deterministic() {
        let p = passage("Jeff Hogg captained the team in 1994.");
        let noisy = NoisyReader::new(ClozeReader, 7, 0.5);
        let qs: Vec<String> = (0..50).map(|i| format!("who captained the team {i}")).collect();
        let a: Vec<_> = qs.iter().map(|q| noisy.read(q, &p).unwrap()).collect();
        let b: Vec<_> = qs.iter().map(|q| noisy.read(q, &p).unwrap()).collect();
        assert_eq!(a, b);
        let abstained = a.iter().filter(|r| r.answer.is_none()).count();
        assert!(abstained > 10 && abstained < 40, "{abstained}");
        let silent = NoisyReader::new(ClozeReader, 7, 0.0);
        assert!(silent.read("who captained the team in 1994", &p).unwrap().answer.is_some());
    }
}
