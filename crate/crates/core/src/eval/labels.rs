use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use super::f1::{is_trivial, sentence_f1, SpanSet, VacuousPolicy};
use crate::corpus::LabeledSpan;
use crate::error::{Error, Result};
use crate::grammar::Symbol;

/// Per-label counts of non-trivial gold spans and how many were predicted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelRecall {
    counts: BTreeMap<String, (usize, usize)>,
}

impl LabelRecall {
    pub fn new() -> Self {
        LabelRecall::default()
    }

    /// A gold span counts as found when its unlabeled span is predicted.
    /// Repeated `(span, label)` pairs count once.
    pub fn add(&mut self, pred: &SpanSet, gold: &[LabeledSpan], sentence_len: usize) {
        let unique: BTreeSet<(usize, usize, &str)> = gold
            .iter()
            .filter(|s| !is_trivial((s.start, s.end), sentence_len))
            .map(|s| (s.start, s.end, s.label.as_str()))
            .collect();
        for (i, j, label) in unique {
            let entry = self.counts.entry(label.to_string()).or_default();
            entry.1 += 1;
            if pred.contains((i, j)) {
                entry.0 += 1;
            }
        }
    }

    /// Recall in percentage points; `None` if the label never occurs.
    pub fn recall(&self, label: &str) -> Option<f64> {
        self.counts
            .get(label)
            .map(|&(found, total)| 100.0 * found as f64 / total as f64)
    }

    /// `(found, total)` per label, sorted by label.
    pub fn counts(&self) -> &BTreeMap<String, (usize, usize)> {
        &self.counts
    }
}

/// Recall of one label on one sentence.
pub fn label_recall(pred: &SpanSet, gold: &[LabeledSpan], sentence_len: usize, label: &str) -> Option<f64> {
    let mut acc = LabelRecall::new();
    acc.add(pred, gold, sentence_len);
    acc.recall(label)
}

/// Mean self-agreement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfF1 {
    pub mean: f64,
    pub pairs: usize,
}

/// Mean over all unordered run pairs of the pairwise sentence-level F1.
/// `runs[r][s]` is the prediction of run `r` on sentence `s`.
pub fn self_f1(runs: &[Vec<SpanSet>], sentence_lens: &[usize]) -> Result<SelfF1> {
    if runs.len() < 2 {
        return Err(Error::invalid("self_f1", "need at least two runs"));
    }
    if let Some(r) = runs.iter().position(|r| r.len() != sentence_lens.len()) {
        return Err(Error::invalid(
            "self_f1",
            format!("run {r} has {} sentences, expected {}", runs[r].len(), sentence_lens.len()),
        ));
    }
    let mut total = 0.0;
    let mut pairs = 0;
    for a in 0..runs.len() {
        for b in a + 1..runs.len() {
            let sum: f64 = sentence_lens
                .iter()
                .enumerate()
                .map(|(s, &len)| sentence_f1(&runs[a][s], &runs[b][s], len, VacuousPolicy::Perfect).unwrap())
                .sum();
            total += sum / sentence_lens.len().max(1) as f64;
            pairs += 1;
        }
    }
    Ok(SelfF1 {
        mean: total / pairs as f64,
        pairs,
    })
}

/// One row of an alignment table.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentRow {
    pub symbol: usize,
    /// Share of the symbol's correct predictions per gold label, in the
    /// table's label order, followed by "Other". Sums to 100.
    pub label_shares: Vec<f64>,
    /// Share of all non-trivial predictions carrying this symbol.
    pub frequency: f64,
    /// Fraction of this symbol's predictions that are gold constituents.
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentTable {
    pub labels: Vec<String>,
    pub rows: Vec<AlignmentRow>,
}

impl AlignmentTable {
    /// Columns: symbol, each label, Other, Freq., Acc. (percentages, one
    /// decimal).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Symbol");
        for l in &self.labels {
            let _ = write!(out, ",{l}");
        }
        out.push_str(",Other,Freq.,Acc.\n");
        for r in &self.rows {
            out.push_str(&Symbol::Nonterminal(r.symbol).name());
            for s in &r.label_shares {
                let _ = write!(out, ",{s:.1}");
            }
            let _ = writeln!(out, ",{:.1},{:.1}", r.frequency, r.precision);
        }
        out
    }
}

/// Builds the alignment between induced nonterminals and gold labels.
///
/// `pred[s]` holds `(i, j, nonterminal)` triples for sentence `s`. A
/// prediction is correct if its span is a non-trivial gold span; it is then
/// attributed to the outermost gold label on that span (the first in
/// `gold[s]`). Labels outside `labels` fall into "Other". Symbols with no
/// correct prediction are omitted.
pub fn alignment_table(
    pred: &[Vec<(usize, usize, usize)>],
    gold: &[Vec<LabeledSpan>],
    sentence_lens: &[usize],
    labels: &[String],
) -> Result<AlignmentTable> {
    if pred.len() != gold.len() || pred.len() != sentence_lens.len() {
        return Err(Error::invalid("alignment_table", "prediction and gold sentence counts differ"));
    }
    let other = labels.len();
    // symbol -> (predicted, correct, per-label correct counts)
    let mut stats: BTreeMap<usize, (usize, usize, Vec<usize>)> = BTreeMap::new();
    let mut total_pred = 0usize;
    for ((p, g), &len) in pred.iter().zip(gold).zip(sentence_lens) {
        let mut outer: HashMap<(usize, usize), &str> = HashMap::new();
        for s in g.iter().filter(|s| !is_trivial((s.start, s.end), len)) {
            outer.entry((s.start, s.end)).or_insert(&s.label);
        }
        for &(i, j, sym) in p.iter().filter(|&&(i, j, _)| !is_trivial((i, j), len)) {
            total_pred += 1;
            let entry = stats.entry(sym).or_insert_with(|| (0, 0, vec![0; other + 1]));
            entry.0 += 1;
            if let Some(label) = outer.get(&(i, j)) {
                entry.1 += 1;
                let col = labels.iter().position(|l| l == label).unwrap_or(other);
                entry.2[col] += 1;
            }
        }
    }
    let rows = stats
        .into_iter()
        .filter(|(_, (_, correct, _))| *correct > 0)
        .map(|(symbol, (predicted, correct, by_label))| AlignmentRow {
            symbol,
            label_shares: by_label.iter().map(|&c| 100.0 * c as f64 / correct as f64).collect(),
            frequency: 100.0 * predicted as f64 / total_pred as f64,
            precision: 100.0 * correct as f64 / predicted as f64,
        })
        .collect();
    Ok(AlignmentTable {
        labels: labels.to_vec(),
        rows,
    })
}

/// Many-to-one tagging accuracy in percentage points: each induced tag maps
/// to its most frequent gold tag over the corpus (ties go to the
/// lexicographically smallest gold tag).
pub fn many_to_one(pred: &[Vec<usize>], gold: &[Vec<String>]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::invalid("many_to_one", "sentence counts differ"));
    }
    let mut table: BTreeMap<usize, BTreeMap<&str, usize>> = BTreeMap::new();
    let mut tokens = 0usize;
    for (s, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(Error::invalid(
                "many_to_one",
                format!("sentence {s}: {} predicted tags for {} gold tags", p.len(), g.len()),
            ));
        }
        for (&t, tag) in p.iter().zip(g) {
            *table.entry(t).or_default().entry(tag.as_str()).or_default() += 1;
            tokens += 1;
        }
    }
    if tokens == 0 {
        return Ok(f64::NAN);
    }
    let correct: usize = table
        .values()
        .map(|counts| {
            // BTreeMap iterates in tag order, so the first maximum wins ties.
            counts.values().fold(0, |best, &c| best.max(c))
        })
        .sum();
    Ok(100.0 * correct as f64 / tokens as f64)
}

/// The gold tag each induced tag maps to under [`many_to_one`].
pub fn many_to_one_map(pred: &[Vec<usize>], gold: &[Vec<String>]) -> BTreeMap<usize, String> {
    let mut table: BTreeMap<usize, BTreeMap<&str, usize>> = BTreeMap::new();
    for (p, g) in pred.iter().zip(gold) {
        for (&t, tag) in p.iter().zip(g) {
            *table.entry(t).or_default().entry(tag.as_str()).or_default() += 1;
        }
    }
    table
        .into_iter()
        .map(|(t, counts)| {
            let mut best: Option<(&str, usize)> = None;
            for (tag, c) in counts {
                if best.is_none_or(|(_, b)| c > b) {
                    best = Some((tag, c));
                }
            }
            (t, best.unwrap().0.to_string())
        })
        .collect()
}
