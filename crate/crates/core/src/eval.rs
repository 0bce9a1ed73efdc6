//! Accuracy, pairwise consistency and descriptive statistics over generated
//! counterfactuals.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qed::{pair_id, PairedRecord, PerturbationCategory};
use crate::text::{answers_match, question_distance, token_f1, tokenize_words};
use crate::types::{FilterVerdict, GeneratedTriple, Validate};

/// How a prediction is judged correct.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Em,
    /// Correct when the best token F1 against any alias reaches `threshold`.
    F1 { threshold: f64 },
}

impl Metric {
    pub const DEFAULT_F1_THRESHOLD: f64 = 0.5;

    pub fn is_correct<S: AsRef<str>>(&self, predicted: &str, gold_answers: &[S]) -> bool {
        match *self {
            Metric::Em => answers_match(predicted, gold_answers),
            Metric::F1 { threshold } => token_f1(predicted, gold_answers) >= threshold,
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "em" => Ok(Metric::Em),
            "f1" => Ok(Metric::F1 {
                threshold: Metric::DEFAULT_F1_THRESHOLD,
            }),
            other => Err(format!("unknown metric `{other}` (expected em|f1)")),
        }
    }
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub example_id: String,
    pub predicted: String,
}

impl Validate for Prediction {
    fn validate(&self) -> Result<()> {
        if self.example_id.is_empty() {
            return Err(Error::InvalidRecord("empty example_id".into()));
        }
        Ok(())
    }
}

/// A prediction scored against its gold aliases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub example_id: String,
    pub predicted: String,
    pub gold_answers: Vec<String>,
    pub correct: bool,
}

impl PredictionRecord {
    pub fn new(example_id: impl Into<String>, predicted: impl Into<String>, gold_answers: Vec<String>) -> Self {
        Self::scored(example_id, predicted, gold_answers, Metric::Em)
    }

    pub fn scored(
        example_id: impl Into<String>,
        predicted: impl Into<String>,
        gold_answers: Vec<String>,
        metric: Metric,
    ) -> Self {
        let predicted = predicted.into();
        let correct = metric.is_correct(&predicted, &gold_answers);
        PredictionRecord {
            example_id: example_id.into(),
            predicted,
            gold_answers,
            correct,
        }
    }
}

pub fn exact_match_accuracy(records: &[PredictionRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::UndefinedMetric("accuracy over zero predictions"));
    }
    let correct = records.iter().filter(|r| r.correct).count();
    Ok(correct as f64 / records.len() as f64)
}

/// Original and counterfactual predictions for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<PerturbationCategory>,
    pub original: PredictionRecord,
    pub counterfactual: PredictionRecord,
}

impl ScoredPair {
    /// Pair id expected for the two records, `{original}::{counterfactual}`.
    pub fn expected_id(&self) -> String {
        format!("{}::{}", self.original.example_id, self.counterfactual.example_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConsistencyCounts {
    pub total_pairs: usize,
    pub originals_correct: usize,
    pub both_correct: usize,
    /// `None` when no original is correct.
    pub consistency: Option<f64>,
    pub undefined: bool,
}

impl ConsistencyCounts {
    fn add(&mut self, pair: &ScoredPair) {
        self.total_pairs += 1;
        if pair.original.correct {
            self.originals_correct += 1;
            if pair.counterfactual.correct {
                self.both_correct += 1;
            }
        }
    }

    fn finish(mut self) -> Self {
        self.consistency = (self.originals_correct > 0)
            .then(|| self.both_correct as f64 / self.originals_correct as f64);
        self.undefined = self.consistency.is_none();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConsistencyReport {
    #[serde(flatten)]
    pub overall: ConsistencyCounts,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub breakdown: BTreeMap<PerturbationCategory, ConsistencyCounts>,
}

impl ConsistencyReport {
    pub fn consistency(&self) -> Option<f64> {
        self.overall.consistency
    }

    /// Aligned plain-text table; one row for all pairs plus one per category.
    pub fn to_text(&self) -> String {
        let mut rows = vec![("all".to_string(), self.overall)];
        rows.extend(self.breakdown.iter().map(|(c, v)| (c.to_string(), *v)));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<18} {:>8} {:>12} {:>12} {:>12}",
            "category", "pairs", "orig_correct", "both_correct", "consistency"
        );
        for (name, c) in rows {
            let value = c
                .consistency
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "undefined".into());
            let _ = writeln!(
                out,
                "{:<18} {:>8} {:>12} {:>12} {:>12}",
                name, c.total_pairs, c.originals_correct, c.both_correct, value
            );
        }
        out
    }
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Accuracy on counterfactuals, conditioned on the original being answered
/// correctly. Per-category rows are added when any pair carries a category.
pub fn pairwise_consistency(pairs: &[ScoredPair]) -> Result<ConsistencyReport> {
    let mut overall = ConsistencyCounts::default();
    let mut breakdown: BTreeMap<PerturbationCategory, ConsistencyCounts> = BTreeMap::new();
    for pair in pairs {
        let expected = pair.expected_id();
        if pair.pair_id != expected {
            return Err(Error::PairMismatch(
                pair.pair_id.clone(),
                format!("records belong to `{expected}`"),
            ));
        }
        overall.add(pair);
        if let Some(c) = pair.category {
            breakdown.entry(c).or_default().add(pair);
        }
    }
    Ok(ConsistencyReport {
        overall: overall.finish(),
        breakdown: breakdown.into_iter().map(|(k, v)| (k, v.finish())).collect(),
    })
}

/// Scores paired records against a predictions file. Original predictions
/// are looked up by example id, counterfactual ones by triple id.
pub fn join_predictions(
    pairs: &[PairedRecord],
    predictions: &[Prediction],
    metric: Metric,
    with_categories: bool,
) -> Result<Vec<ScoredPair>> {
    let mut by_id: HashMap<&str, &str> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(&p.example_id, &p.predicted).is_some() {
            return Err(Error::DuplicateId(p.example_id.clone()));
        }
    }
    pairs
        .iter()
        .map(|pair| {
            let expected = pair_id(&pair.original, &pair.counterfactual);
            if pair.pair_id != expected {
                return Err(Error::PairMismatch(
                    pair.pair_id.clone(),
                    format!("records belong to `{expected}`"),
                ));
            }
            let lookup = |id: &str| {
                by_id.get(id).copied().ok_or_else(|| {
                    Error::PairMismatch(pair.pair_id.clone(), format!("no prediction for `{id}`"))
                })
            };
            let original = PredictionRecord::scored(
                &pair.original.example_id,
                lookup(&pair.original.example_id)?,
                pair.original.gold_answers.clone(),
                metric,
            );
            let counterfactual = PredictionRecord::scored(
                &pair.counterfactual.triple_id,
                lookup(&pair.counterfactual.triple_id)?,
                vec![pair.counterfactual.answer.surface.clone()],
                metric,
            );
            Ok(ScoredPair {
                pair_id: pair.pair_id.clone(),
                category: with_categories.then_some(pair.category),
                original,
                counterfactual,
            })
        })
        .collect()
}

/// Edit distance stored by the selection stage, if any.
pub fn recorded_distance(triple: &GeneratedTriple) -> Option<usize> {
    [FilterVerdict::MINIMALITY, FilterVerdict::MAXIMALITY]
        .iter()
        .find_map(|name| triple.verdicts.get(*name)?.edit_distance)
}

/// Word edit distance between an original question and a triple's question.
pub fn triple_distance(original_question: &str, triple: &GeneratedTriple) -> usize {
    question_distance(original_question, &triple.question)
}

pub fn edit_distance_histogram(distances: impl IntoIterator<Item = usize>) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for d in distances {
        *hist.entry(d).or_insert(0) += 1;
    }
    hist
}

/// Mean edit distance per retrieval rank, ranks ascending.
pub fn rank_vs_distance_curve(points: impl IntoIterator<Item = (u32, usize)>) -> Vec<(u32, f64)> {
    let mut sums: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (rank, d) in points {
        let e = sums.entry(rank).or_insert((0, 0));
        e.0 += d;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(rank, (sum, n))| (rank, sum as f64 / n as f64))
        .collect()
}

pub const QUESTION_TYPE_LIMIT: usize = 20;

/// Counts questions by their first two tokens. Highest counts first, ties
/// in lexicographic order, at most 20 rows. Questions without tokens are
/// skipped.
pub fn question_type_distribution<S: AsRef<str>>(questions: &[S]) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for q in questions {
        let tokens = tokenize_words(q.as_ref());
        if tokens.is_empty() {
            continue;
        }
        let key = tokens[..tokens.len().min(2)].join(" ");
        *counts.entry(key).or_insert(0) += 1;
    }
    let mut rows: Vec<_> = counts.into_iter().collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows.truncate(QUESTION_TYPE_LIMIT);
    rows
}

/// Items binned by edit distance: 1 to 4, 5 to 10, 11 and above.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Shards<T> {
    pub short: Vec<T>,
    pub medium: Vec<T>,
    pub long: Vec<T>,
    /// Items at distance 0, which belong to no shard.
    pub excluded: usize,
}

impl<T> Shards<T> {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.short.len(), self.medium.len(), self.long.len())
    }
}

pub fn shard_by_edit_distance<T>(items: impl IntoIterator<Item = (T, usize)>) -> Shards<T> {
    let mut shards = Shards {
        short: Vec::new(),
        medium: Vec::new(),
        long: Vec::new(),
        excluded: 0,
    };
    for (item, d) in items {
        match d {
            0 => shards.excluded += 1,
            1..=4 => shards.short.push(item),
            5..=10 => shards.medium.push(item),
            _ => shards.long.push(item),
        }
    }
    shards
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn rec(id: &str, correct: bool) -> PredictionRecord {
        PredictionRecord {
            example_id: id.into(),
            predicted: String::new(),
            gold_answers: vec![],
            correct,
        }
    }

    fn pair(i: usize, orig: bool, cf: bool) -> ScoredPair {
        ScoredPair {
            pair_id: format!("o{i}::c{i}"),
            category: None,
            original: rec(&format!("o{i}"), orig),
            counterfactual: rec(&format!("c{i}"), cf),
        }
    }

    #[test]
    fn accuracy_examples() {
        let four = [rec("a", true), rec("b", true), rec("c", true), rec("d", false)];
        assert_eq!(exact_match_accuracy(&four).unwrap(), 0.75);
        assert_eq!(exact_match_accuracy(&four[..3]).unwrap(), 1.0);
        assert_eq!(exact_match_accuracy(&four[3..]).unwrap(), 0.0);
        assert!(matches!(exact_match_accuracy(&[]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn correctness_follows_answer_matching() {
        let r = PredictionRecord::new("a", "The Tigers!", vec!["tigers".into()]);
        assert!(r.correct);
        let r = PredictionRecord::new("a", "Richmond Tigers", vec!["tigers".into()]);
        assert!(!r.correct);
        let f1 = Metric::F1 { threshold: 0.5 };
        assert!(PredictionRecord::scored("a", "Richmond Tigers", vec!["tigers".into()], f1).correct);
        assert_eq!("f1".parse::<Metric>().unwrap(), f1);
        assert!("bleu".parse::<Metric>().is_err());
    }

    #[test]
    fn consistency_examples() {
        let pairs = [pair(0, true, true), pair(1, true, true), pair(2, true, false), pair(3, false, true)];
        let r = pairwise_consistency(&pairs).unwrap();
        assert_eq!(r.consistency(), Some(2.0 / 3.0));
        assert_eq!((r.overall.total_pairs, r.overall.originals_correct, r.overall.both_correct), (4, 3, 2));

        let wrong: Vec<_> = (0..4).map(|i| pair(i, false, true)).collect();
        let r = pairwise_consistency(&wrong).unwrap();
        assert_eq!(r.consistency(), None);
        assert!(r.overall.undefined);
        assert!(r.to_text().contains("undefined"));

        let all: Vec<_> = (0..4).map(|i| pair(i, true, true)).collect();
        assert_eq!(pairwise_consistency(&all).unwrap().consistency(), Some(1.0));
    }

    #[test]
    fn mismatched_pair_id_names_the_pair() {
        let mut p = pair(0, true, true);
        p.pair_id = "o0::c9".into();
        let err = pairwise_consistency(&[p]).unwrap_err();
        assert!(err.to_string().contains("o0::c9"), "{err}");
    }

    #[test]
    fn breakdown_per_category() {
        let mut a = pair(0, true, true);
        a.category = Some(PerturbationCategory::ReferenceChange);
        let mut b = pair(1, true, false);
        b.category = Some(PerturbationCategory::PredicateChange);
        let r = pairwise_consistency(&[a, b]).unwrap();
        assert_eq!(r.consistency(), Some(0.5));
        assert_eq!(r.breakdown[&PerturbationCategory::ReferenceChange].consistency, Some(1.0));
        assert_eq!(r.breakdown[&PerturbationCategory::PredicateChange].consistency, Some(0.0));
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["total_pairs"], 2);
        assert_eq!(json["breakdown"]["predicate_change"]["both_correct"], 0);
    }

    #[test]
    fn histogram_examples() {
        assert_eq!(edit_distance_histogram([2, 2, 5]), BTreeMap::from([(2, 2), (5, 1)]));
        assert!(edit_distance_histogram([]).is_empty());
        assert_eq!(
            edit_distance_histogram([question_distance("who is it", "who is it")]),
            BTreeMap::from([(0, 1)])
        );
    }

    #[test]
    fn rank_curve_examples() {
        assert_eq!(rank_vs_distance_curve([(1, 2), (1, 4), (2, 6)]), [(1, 3.0), (2, 6.0)]);
        assert_eq!(rank_vs_distance_curve([(7, 3)]), [(7, 3.0)]);
        assert!(rank_vs_distance_curve([]).is_empty());
    }

    #[test]
    fn question_type_examples() {
        assert_eq!(
            question_type_distribution(&["who is x", "who is y", "when did z"]),
            [("who is".to_string(), 2), ("when did".to_string(), 1)]
        );
        assert!(question_type_distribution::<&str>(&[]).is_empty());
        let many: Vec<String> = (0..25).map(|i| format!("w{i:02} x y")).collect();
        let rows = question_type_distribution(&many);
        assert_eq!(rows.len(), 20);
        assert_eq!(rows[0].0, "w00 x");
    }

    #[test]
    fn shard_examples() {
        let s = shard_by_edit_distance([1, 4, 5, 10, 11].map(|d| (d, d)));
        assert_eq!(s.sizes(), (2, 2, 1));
        assert_eq!((s.short, s.medium, s.long), (vec![1, 4], vec![5, 10], vec![11]));
        let z = shard_by_edit_distance([((), 0), ((), 0)]);
        assert_eq!((z.sizes(), z.excluded), ((0, 0, 0), 2));
        let e = shard_by_edit_distance(Vec::<((), usize)>::new());
        assert_eq!((e.sizes(), e.excluded), ((0, 0, 0), 0));
    }

    fn arb_pairs() -> impl Strategy<Value = Vec<ScoredPair>> {
        prop::collection::vec((any::<bool>(), any::<bool>(), 0usize..4), 0..40).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (o, c, cat))| {
                    let mut p = pair(i, o, c);
                    p.category = PerturbationCategory::ALL.get(cat).copied();
                    p
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn consistency_equals_conditional_accuracy(pairs in arb_pairs()) {
            let report = pairwise_consistency(&pairs).unwrap();
            let cf: Vec<PredictionRecord> = pairs
                .iter()
                .filter(|p| p.original.correct)
                .map(|p| p.counterfactual.clone())
                .collect();
            match exact_match_accuracy(&cf) {
                Ok(acc) => prop_assert_eq!(report.consistency(), Some(acc)),
                Err(_) => prop_assert!(report.overall.undefined),
            }
            prop_assert!(report.overall.both_correct <= report.overall.originals_correct);
            prop_assert!(report.overall.originals_correct <= report.overall.total_pairs);
        }

        #[test]
        fn consistency_ignores_order(mut pairs in arb_pairs(), seed in any::<u64>()) {
            let before = pairwise_consistency(&pairs).unwrap();
            let n = pairs.len();
            if n > 1 {
                pairs.rotate_left((seed as usize) % n);
                pairs.swap(0, n - 1);
            }
            prop_assert_eq!(pairwise_consistency(&pairs).unwrap(), before);
        }

        #[test]
        fn duplicated_predictions_are_fully_consistent(pairs in arb_pairs()) {
            let dup: Vec<ScoredPair> = pairs
                .into_iter()
                .map(|mut p| {
                    p.counterfactual.correct = p.original.correct;
                    p
                })
                .collect();
            let r = pairwise_consistency(&dup).unwrap();
            if dup.iter().any(|p| p.original.correct) {
                prop_assert_eq!(r.consistency(), Some(1.0));
            }
        }

        #[test]
        fn counts_sum_to_input(ds in prop::collection::vec(0usize..20, 0..60)) {
            let hist = edit_distance_histogram(ds.iter().copied());
            prop_assert_eq!(hist.values().sum::<usize>(), ds.len());
            let s = shard_by_edit_distance(ds.iter().map(|&d| (d, d)));
            let (a, b, c) = s.sizes();
            prop_assert_eq!(a + b + c + s.excluded, ds.len());
        }
    }
}
