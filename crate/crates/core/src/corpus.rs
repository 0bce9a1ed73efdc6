//! Passage corpus, a BM25 inverted index and uniform passage sampling.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::text::tokenize_words;
use crate::types::Passage;

/// An id-addressable passage collection. Passages keep file order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    passages: Vec<Passage>,
    by_id: HashMap<String, usize>,
    average_token_length: f64,
}

impl Corpus {
    pub fn from_passages(passages: Vec<Passage>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(passages.len());
        for (i, p) in passages.iter().enumerate() {
            if by_id.insert(p.passage_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(p.passage_id.clone()));
            }
        }
        let total: usize = passages.iter().map(Passage::token_count).sum();
        let average_token_length = if passages.is_empty() {
            0.0
        } else {
            total as f64 / passages.len() as f64
        };
        Ok(Corpus {
            passages,
            by_id,
            average_token_length,
        })
    }

    pub fn document_count(&self) -> usize {
        self.passages.len()
    }

    pub fn average_token_length(&self) -> f64 {
        self.average_token_length
    }

    pub fn get(&self, passage_id: &str) -> Option<&Passage> {
        self.by_id.get(passage_id).map(|&i| &self.passages[i])
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }
}

/// Loads a corpus from JSONL passage records.
pub fn ingest_corpus<R: Read>(source: R, source_name: &str) -> Result<Corpus> {
    Corpus::from_passages(jsonl::parse(source, source_name)?)
}

pub fn ingest_corpus_file(path: impl AsRef<Path>) -> Result<Corpus> {
    Corpus::from_passages(jsonl::read(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    /// Position of the passage in corpus order.
    pub doc: usize,
    pub term_frequency: u32,
}

/// Term postings over a borrowed corpus. Immutable after build.
#[derive(Debug, Clone)]
pub struct InvertedIndex<'c> {
    corpus: &'c Corpus,
    postings: HashMap<String, Vec<Posting>>,
    document_lengths: Vec<usize>,
    params: Bm25Params,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved<'c> {
    pub passage: &'c Passage,
    pub score: f64,
    /// 1-based.
    pub rank: u32,
}

pub fn build_index(corpus: &Corpus, params: Bm25Params) -> InvertedIndex<'_> {
    let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
    let mut document_lengths = Vec::with_capacity(corpus.document_count());
    for (doc, passage) in corpus.passages().iter().enumerate() {
        let tokens = tokenize_words(&passage.body);
        document_lengths.push(tokens.len());
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        for (term, term_frequency) in counts {
            postings.entry(term).or_default().push(Posting {
                doc,
                term_frequency,
            });
        }
    }
    InvertedIndex {
        corpus,
        postings,
        document_lengths,
        params,
    }
}

impl<'c> InvertedIndex<'c> {
    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn corpus(&self) -> &'c Corpus {
        self.corpus
    }

    /// Postings for `term` as (passage_id, term_frequency), in corpus order.
    pub fn postings(&self, term: &str) -> Vec<(&'c str, u32)> {
        self.postings
            .get(term)
            .map(|list| {
                list.iter()
                    .map(|p| {
                        (
                            self.corpus.passages[p.doc].passage_id.as_str(),
                            p.term_frequency,
                        )
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn document_length(&self, passage_id: &str) -> Option<usize> {
        self.corpus
            .by_id
            .get(passage_id)
            .map(|&i| self.document_lengths[i])
    }

    /// Non-negative BM25 idf: ln(1 + (N - n + 0.5) / (n + 0.5)).
    fn idf(&self, document_frequency: usize) -> f64 {
        let n = self.corpus.document_count() as f64;
        let df = document_frequency as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Top-`k` passages by BM25 score over the unique query terms.
    /// Only passages sharing at least one term are returned. Ties are broken
    /// by ascending passage_id.
    pub fn retrieve(&self, query: &str, k: usize) -> Vec<Retrieved<'c>> {
        if k == 0 {
            return Vec::new();
        }
        let avgdl = self.corpus.average_token_length();
        let Bm25Params { k1, b } = self.params;
        let mut seen = HashSet::new();
        let mut scores: BTreeMap<usize, f64> = BTreeMap::new();
        for term in tokenize_words(query) {
            if !seen.insert(term.clone()) {
                continue;
            }
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let idf = self.idf(list.len());
            for p in list {
                let tf = f64::from(p.term_frequency);
                let dl = self.document_lengths[p.doc] as f64;
                let norm = k1 * (1.0 - b + b * dl / avgdl);
                *scores.entry(p.doc).or_default() += idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }
        let mut ranked: Vec<(usize, f64)> = scores.into_iter().collect();
        ranked.sort_by(|(da, sa), (db, sb)| {
            sb.total_cmp(sa).then_with(|| {
                self.corpus.passages[*da]
                    .passage_id
                    .cmp(&self.corpus.passages[*db].passage_id)
            })
        });
        ranked
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, (doc, score))| Retrieved {
                passage: &self.corpus.passages[doc],
                score,
                rank: i as u32 + 1,
            })
            .collect()
    }
}

/// Uniformly samples one passage; the same seed always yields the same passage.
pub fn sample_random_passage(corpus: &Corpus, seed: u64) -> Result<&Passage> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = rng.random_range(0..corpus.document_count());
    Ok(&corpus.passages[idx])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(bodies: &[(&str, &str)]) -> Corpus {
        Corpus::from_passages(
            bodies
                .iter()
                .map(|(id, body)| Passage::new(*id, "", *body))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ingest_counts_and_rejects_duplicates() {
        let data = "{\"passage_id\":\"a\",\"title\":\"\",\"body\":\"x y\"}\n\
                    {\"passage_id\":\"b\",\"title\":\"\",\"body\":\"x\"}\n\
                    {\"passage_id\":\"c\",\"title\":\"\",\"body\":\"z\"}\n";
        let c = ingest_corpus(data.as_bytes(), "t").unwrap();
        assert_eq!(c.document_count(), 3);
        assert!((c.average_token_length() - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.get("a").unwrap().token_spans.len(), 2);

        let dup = "{\"passage_id\":\"a\",\"body\":\"x\"}\n{\"passage_id\":\"a\",\"body\":\"y\"}\n";
        match ingest_corpus(dup.as_bytes(), "t") {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "a"),
            other => panic!("unexpected {other:?}"),
        }

        let empty = ingest_corpus("".as_bytes(), "t").unwrap();
        assert_eq!(empty.document_count(), 0);
    }

    #[test]
    fn index_postings() {
        let c = corpus(&[("p", "a b a")]);
        let idx = build_index(&c, Bm25Params::default());
        assert_eq!(idx.postings("a"), vec![("p", 2)]);
        assert_eq!(idx.postings("b"), vec![("p", 1)]);

        let empty = Corpus::default();
        assert_eq!(build_index(&empty, Bm25Params::default()).term_count(), 0);

        let c = corpus(&[("p", "x shared"), ("q", "shared y")]);
        let idx = build_index(&c, Bm25Params::default());
        assert_eq!(idx.postings("shared").len(), 2);
        assert_eq!(idx.document_length("q"), Some(2));
    }

    #[test]
    fn unique_term_ranks_first_and_unknown_query_is_empty() {
        let c = corpus(&[("p1", "river bank"), ("p2", "money bank"), ("p3", "river otter")]);
        let idx = build_index(&c, Bm25Params::default());
        let hits = idx.retrieve("money", 5);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].passage.passage_id, "p2");
        assert_eq!(hits[0].rank, 1);
        assert!(idx.retrieve("zebra", 5).is_empty());
        assert!(idx.retrieve("", 5).is_empty());
    }

    #[test]
    fn ties_break_by_passage_id() {
        let c = corpus(&[("z", "cat"), ("a", "cat"), ("m", "cat")]);
        let idx = build_index(&c, Bm25Params::default());
        let ids: Vec<_> = idx
            .retrieve("cat", 10)
            .iter()
            .map(|r| r.passage.passage_id.clone())
            .collect();
        assert_eq!(ids, ["a", "m", "z"]);
        assert_eq!(idx.retrieve("cat", 2).len(), 2);
    }

    #[test]
    fn random_sampling_basics() {
        let one = corpus(&[("only", "x")]);
        for seed in 0..20 {
            assert_eq!(sample_random_passage(&one, seed).unwrap().passage_id, "only");
        }
        let c = corpus(&[("a", "x"), ("b", "y"), ("c", "z")]);
        assert_eq!(
            sample_random_passage(&c, 42).unwrap(),
            sample_random_passage(&c, 42).unwrap()
        );
        assert!(matches!(
            sample_random_passage(&Corpus::default(), 1),
            Err(Error::EmptyCorpus)
        ));
    }
}
