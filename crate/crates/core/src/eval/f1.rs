use std::collections::BTreeSet;
use std::str::FromStr;

use crate::chart::Tree;
use crate::corpus::LabeledSpan;
use crate::error::{Error, Result};

/// Deduplicated unlabeled spans `(i, j)`, inclusive.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SpanSet(BTreeSet<(usize, usize)>);

impl SpanSet {
    pub fn new() -> Self {
        SpanSet::default()
    }

    pub fn insert(&mut self, start: usize, end: usize) {
        debug_assert!(start <= end);
        self.0.insert((start, end));
    }

    pub fn contains(&self, span: (usize, usize)) -> bool {
        self.0.contains(&span)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().copied()
    }

    /// Nonterminal spans of a parse.
    pub fn from_tree(tree: &Tree) -> Self {
        tree.constituent_spans().into_iter().map(|(i, j, _)| (i, j)).collect()
    }

    pub fn from_labeled(spans: &[LabeledSpan]) -> Self {
        spans.iter().map(|s| (s.start, s.end)).collect()
    }

    /// Drops width-one spans and the whole-sentence span.
    pub fn without_trivial(&self, sentence_len: usize) -> Self {
        SpanSet(self.0.iter().copied().filter(|&s| !is_trivial(s, sentence_len)).collect())
    }
}

impl FromIterator<(usize, usize)> for SpanSet {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        SpanSet(iter.into_iter().collect())
    }
}

/// Width-one spans and the span covering the whole sentence.
pub fn is_trivial((start, end): (usize, usize), sentence_len: usize) -> bool {
    start == end || (start == 0 && end + 1 == sentence_len)
}

/// How to score a sentence with no non-trivial gold or predicted spans.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum VacuousPolicy {
    /// Score it as 100.
    #[default]
    Perfect,
    /// Leave it out of sentence-level averages.
    Skip,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum EvalMode {
    #[default]
    Sentence,
    Corpus,
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentence" => Ok(EvalMode::Sentence),
            "corpus" => Ok(EvalMode::Corpus),
            other => Err(Error::Config(format!("unknown evaluation mode {other:?}"))),
        }
    }
}

/// True positives, false positives and false negatives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SpanCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl SpanCounts {
    /// Counts after removing trivial spans from both sides.
    pub fn compare(pred: &SpanSet, gold: &SpanSet, sentence_len: usize) -> Self {
        let pred = pred.without_trivial(sentence_len);
        let gold = gold.without_trivial(sentence_len);
        let tp = pred.iter().filter(|&s| gold.contains(s)).count();
        SpanCounts {
            tp,
            fp: pred.len() - tp,
            fn_: gold.len() - tp,
        }
    }

    pub fn add(&mut self, other: SpanCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// F1 in percentage points. `None` when both sides are empty.
    pub fn f1(&self) -> Option<f64> {
        let pred = self.tp + self.fp;
        let gold = self.tp + self.fn_;
        if pred == 0 && gold == 0 {
            return None;
        }
        if self.tp == 0 {
            return Some(0.0);
        }
        let p = self.tp as f64 / pred as f64;
        let r = self.tp as f64 / gold as f64;
        Some(100.0 * 2.0 * p * r / (p + r))
    }

    pub fn precision(&self) -> Option<f64> {
        let pred = self.tp + self.fp;
        (pred > 0).then(|| 100.0 * self.tp as f64 / pred as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let gold = self.tp + self.fn_;
        (gold > 0).then(|| 100.0 * self.tp as f64 / gold as f64)
    }
}

/// Unlabeled F1 of one sentence. `None` only for a vacuous sentence under
/// [`VacuousPolicy::Skip`].
pub fn sentence_f1(pred: &SpanSet, gold: &SpanSet, sentence_len: usize, policy: VacuousPolicy) -> Option<f64> {
    match SpanCounts::compare(pred, gold, sentence_len).f1() {
        Some(f) => Some(f),
        None => (policy == VacuousPolicy::Perfect).then_some(100.0),
    }
}

/// Accumulates both sentence-level and corpus-level F1.
#[derive(Debug, Clone, Default)]
pub struct F1Accumulator {
    policy: VacuousPolicy,
    sentence_sum: f64,
    sentences_scored: usize,
    sentences_seen: usize,
    counts: SpanCounts,
}

impl F1Accumulator {
    pub fn new(policy: VacuousPolicy) -> Self {
        F1Accumulator {
            policy,
            ..Default::default()
        }
    }

    pub fn add(&mut self, pred: &SpanSet, gold: &SpanSet, sentence_len: usize) {
        let counts = SpanCounts::compare(pred, gold, sentence_len);
        self.counts.add(counts);
        self.sentences_seen += 1;
        let score = match counts.f1() {
            Some(f) => Some(f),
            None => (self.policy == VacuousPolicy::Perfect).then_some(100.0),
        };
        if let Some(f) = score {
            self.sentence_sum += f;
            self.sentences_scored += 1;
        }
    }

    pub fn merge(&mut self, other: &F1Accumulator) {
        self.sentence_sum += other.sentence_sum;
        self.sentences_scored += other.sentences_scored;
        self.sentences_seen += other.sentences_seen;
        self.counts.add(other.counts);
    }

    /// Mean per-sentence F1; `NaN` if no sentence was scored.
    pub fn sentence_f1(&self) -> f64 {
        if self.sentences_scored == 0 {
            return f64::NAN;
        }
        self.sentence_sum / self.sentences_scored as f64
    }

    /// F1 from pooled counts; vacuous corpora follow the policy.
    pub fn corpus_f1(&self) -> f64 {
        match self.counts.f1() {
            Some(f) => f,
            None if self.policy == VacuousPolicy::Perfect => 100.0,
            None => f64::NAN,
        }
    }

    pub fn f1(&self, mode: EvalMode) -> f64 {
        match mode {
            EvalMode::Sentence => self.sentence_f1(),
            EvalMode::Corpus => self.corpus_f1(),
        }
    }

    pub fn counts(&self) -> SpanCounts {
        self.counts
    }

    pub fn sentences_seen(&self) -> usize {
        self.sentences_seen
    }

    pub fn sentences_scored(&self) -> usize {
        self.sentences_scored
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(spans: &[(usize, usize)]) -> SpanSet {
        spans.iter().copied().collect()
    }

    #[test]
    fn hand_computed_half() {
        let gold = set(&[(0, 1), (0, 2)]);
        let pred = set(&[(0, 1), (1, 2)]);
        let c = SpanCounts::compare(&pred, &gold, 4);
        assert_eq!(c, SpanCounts { tp: 1, fp: 1, fn_: 1 });
        assert_eq!(c.precision(), Some(50.0));
        assert_eq!(c.recall(), Some(50.0));
        assert_eq!(c.f1(), Some(50.0));
    }

    #[test]
    fn trivial_spans_never_count() {
        let gold = set(&[(0, 3), (1, 1), (0, 1)]);
        let pred = set(&[(0, 3), (2, 2), (2, 3)]);
        let c = SpanCounts::compare(&pred, &gold, 4);
        assert_eq!(c, SpanCounts { tp: 0, fp: 1, fn_: 1 });
        assert!(is_trivial((0, 3), 4) && is_trivial((2, 2), 4));
        assert!(!is_trivial((0, 2), 4) && !is_trivial((1, 3), 4));
    }

    #[test]
    fn conventions() {
        let all_trivial = set(&[(0, 1), (0, 0), (1, 1)]);
        assert_eq!(sentence_f1(&all_trivial, &all_trivial, 2, VacuousPolicy::Perfect), Some(100.0));
        assert_eq!(sentence_f1(&all_trivial, &all_trivial, 2, VacuousPolicy::Skip), None);
        assert_eq!(sentence_f1(&set(&[(0, 1)]), &set(&[]), 4, VacuousPolicy::Perfect), Some(0.0));
        let a = set(&[(0, 1), (2, 3), (0, 4)]);
        assert_eq!(sentence_f1(&a, &a, 5, VacuousPolicy::Perfect), Some(100.0));
    }

    #[test]
    fn sentence_and_corpus_modes() {
        let mut acc = F1Accumulator::new(VacuousPolicy::Perfect);
        // 1/2 correct on a length-4 sentence, perfect on a length-5 one.
        acc.add(&set(&[(0, 1), (1, 2)]), &set(&[(0, 1), (0, 2)]), 4);
        acc.add(&set(&[(0, 1), (2, 4), (3, 4)]), &set(&[(0, 1), (2, 4), (3, 4)]), 5);
        assert_eq!(acc.sentence_f1(), 75.0);
        // Pooled: tp 4, fp 1, fn 1.
        assert_eq!(acc.counts(), SpanCounts { tp: 4, fp: 1, fn_: 1 });
        assert!((acc.corpus_f1() - 80.0).abs() < 1e-12);
        assert_eq!(acc.f1(EvalMode::Corpus), acc.corpus_f1());
    }

    #[test]
    fn identical_sentences_make_modes_agree() {
        let mut acc = F1Accumulator::new(VacuousPolicy::Perfect);
        for _ in 0..7 {
            acc.add(&set(&[(0, 1), (1, 2), (3, 4)]), &set(&[(0, 1), (0, 2), (3, 4)]), 6);
        }
        assert!((acc.sentence_f1() - acc.corpus_f1()).abs() < 1e-12);
    }

    #[test]
    fn skip_policy_excludes_vacuous_sentences() {
        let mut acc = F1Accumulator::new(VacuousPolicy::Skip);
        acc.add(&set(&[(0, 1)]), &set(&[(0, 1)]), 2);
        acc.add(&set(&[(0, 1)]), &set(&[(1, 2)]), 4);
        assert_eq!(acc.sentences_seen(), 2);
        assert_eq!(acc.sentences_scored(), 1);
        assert_eq!(acc.sentence_f1(), 0.0);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("corpus".parse::<EvalMode>().unwrap(), EvalMode::Corpus);
        assert!("labeled".parse::<EvalMode>().is_err());
    }
}
