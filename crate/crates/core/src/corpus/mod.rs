//! Treebank ingestion: bracketed trees, punctuation removal, lowercasing,
//! vocabulary truncation and gold constituent spans.

mod bracketed;
mod preprocess;

pub use bracketed::{read_bracketed, read_bracketed_file, RawTree};
pub use preprocess::{
    apply_vocab, base_label, binarize_right, gold_spans, preprocess, read_gold_spans, read_processed, strip_tree,
    write_gold_spans, write_processed, LabeledSpan, ProcessedExample, TagSet, Vocab, DEFAULT_PUNCT_TAGS, UNK,
    UNK_ID,
};
