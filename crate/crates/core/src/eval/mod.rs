//! Evaluation: unlabeled bracketing F1 with trivial-span filtering, label
//! recall, self-agreement, symbol/label alignment, many-to-one tagging
//! accuracy, importance-weighted perplexity and baseline trees.

mod baselines;
mod f1;
mod labels;
mod perplexity;
mod report;

pub use baselines::{baseline_spans, Baseline};
pub use f1::{is_trivial, sentence_f1, EvalMode, F1Accumulator, SpanCounts, SpanSet, VacuousPolicy};
pub use labels::{
    alignment_table, label_recall, many_to_one, many_to_one_map, self_f1, AlignmentRow, AlignmentTable, LabelRecall,
    SelfF1,
};
pub use perplexity::{iw_log_likelihood, iw_perplexity, PerplexityEstimate};
pub use report::{evaluate, EvalReport, SystemScore};
