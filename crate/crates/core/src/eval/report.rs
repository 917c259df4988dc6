use std::fmt::Write as _;

use super::f1::{F1Accumulator, SpanCounts, SpanSet, VacuousPolicy};
use super::labels::LabelRecall;
use crate::corpus::LabeledSpan;
use crate::error::{Error, Result};

/// Scores of one system over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemScore {
    pub name: String,
    pub sentences: usize,
    pub sentence_f1: f64,
    pub corpus_f1: f64,
    pub counts: SpanCounts,
}

/// Scores for the evaluated system and any reference rows, plus label
/// recall of the first row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<SystemScore>,
    pub label_recall: LabelRecall,
}

/// F1 and label recall of predicted span sets against gold trees.
pub fn evaluate(
    name: &str,
    pred: &[SpanSet],
    gold: &[Vec<LabeledSpan>],
    sentence_lens: &[usize],
    policy: VacuousPolicy,
) -> Result<(SystemScore, LabelRecall)> {
    if pred.len() != gold.len() || pred.len() != sentence_lens.len() {
        return Err(Error::invalid(
            "evaluate",
            format!("{} predictions for {} gold sentences", pred.len(), gold.len()),
        ));
    }
    let mut f1 = F1Accumulator::new(policy);
    let mut recall = LabelRecall::new();
    for ((p, g), &len) in pred.iter().zip(gold).zip(sentence_lens) {
        f1.add(p, &SpanSet::from_labeled(g), len);
        recall.add(p, g, len);
    }
    let score = SystemScore {
        name: name.to_string(),
        sentences: pred.len(),
        sentence_f1: f1.sentence_f1(),
        corpus_f1: f1.corpus_f1(),
        counts: f1.counts(),
    };
    Ok((score, recall))
}

impl EvalReport {
    /// Two tab-separated tables separated by a blank line: per-system F1,
    /// then per-label recall.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("system\tsentences\tsentence_f1\tcorpus_f1\ttp\tfp\tfn\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.4}\t{:.4}\t{}\t{}\t{}",
                r.name, r.sentences, r.sentence_f1, r.corpus_f1, r.counts.tp, r.counts.fp, r.counts.fn_
            );
        }
        out.push_str("\nlabel\trecall\tfound\ttotal\n");
        for (label, &(found, total)) in self.label_recall.counts() {
            let recall = 100.0 * found as f64 / total as f64;
            let _ = writeln!(out, "{label}\t{recall:.4}\t{found}\t{total}");
        }
        out
    }

    /// `key=value` lines: `<system>.<metric>` and `recall.<label>`.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(out, "{}.sentences={}", r.name, r.sentences);
            let _ = writeln!(out, "{}.sentence_f1={}", r.name, r.sentence_f1);
            let _ = writeln!(out, "{}.corpus_f1={}", r.name, r.corpus_f1);
        }
        for (label, &(found, total)) in self.label_recall.counts() {
            let _ = writeln!(out, "recall.{label}={}", 100.0 * found as f64 / total as f64);
        }
        out
    }
}
