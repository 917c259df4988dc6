use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use super::RawTree;
use crate::chart::Sentence;
use crate::error::{Error, Result};

/// Reserved out-of-vocabulary token, always id 0.
pub const UNK: &str = "<unk>";
pub const UNK_ID: usize = 0;

/// POS tags removed during preprocessing by default: punctuation, brackets,
/// quotes and empty elements.
pub const DEFAULT_PUNCT_TAGS: &[&str] = &[".", ",", ":", "``", "''", "-LRB-", "-RRB-", "-NONE-"];

/// Set of POS tags treated as punctuation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSet(BTreeSet<String>);

impl TagSet {
    /// Whitespace-separated tag list.
    pub fn parse(list: &str) -> Self {
        TagSet(list.split_whitespace().map(str::to_string).collect())
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.0.contains(tag)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl Default for TagSet {
    fn default() -> Self {
        TagSet(DEFAULT_PUNCT_TAGS.iter().map(|s| s.to_string()).collect())
    }
}

/// Token vocabulary with `<unk>` at index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from tokens in id order. The first entry must be
    /// `<unk>`.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNK) {
            return Err(Error::Config(format!("vocabulary must start with {UNK}")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid vocabulary token {t:?}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    /// Keeps the `cap` most frequent tokens; ties go to the
    /// lexicographically smaller token.
    pub fn build<'a>(words: impl IntoIterator<Item = &'a str>, cap: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for w in words {
            if w != UNK {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = std::iter::once(UNK.to_string())
            .chain(ranked.into_iter().take(cap).map(|(w, _)| w.to_string()))
            .collect();
        Vocab::from_tokens(tokens).expect("built vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Sentence {
        Sentence::new(words.iter().map(|w| self.id(w.as_ref())).collect())
    }

    /// One token per line in id order.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.tokens {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let tokens = input
            .lines()
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io("<vocab>", e))?;
        Vocab::from_tokens(tokens)
    }
}

/// A constituent covering tokens `start..=end`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledSpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

/// A preprocessed sentence with its gold tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedExample {
    pub sentence: Sentence,
    /// Lowercased surface tokens (before the `<unk>` mapping).
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
    /// Gold tree with punctuation removed and words lowercased.
    pub tree: RawTree,
    pub gold: Vec<LabeledSpan>,
}

/// Removes punctuation leaves (and nodes left empty), lowercases words and
/// unwraps an unlabeled single-child root. `None` if nothing remains.
pub fn strip_tree(tree: &RawTree, punct: &TagSet) -> Option<RawTree> {
    let stripped = strip(tree, punct)?;
    match stripped {
        RawTree::Node { label, mut children } if label.is_empty() && children.len() == 1 => children.pop(),
        t => Some(t),
    }
}

fn strip(tree: &RawTree, punct: &TagSet) -> Option<RawTree> {
    match tree {
        RawTree::Leaf { tag, .. } if punct.contains(tag) => None,
        RawTree::Leaf { tag, word } => Some(RawTree::leaf(tag.clone(), word.to_lowercase())),
        RawTree::Node { label, children } => {
            let kept: Vec<RawTree> = children.iter().filter_map(|c| strip(c, punct)).collect();
            (!kept.is_empty()).then(|| RawTree::node(label.clone(), kept))
        }
    }
}

/// Preprocesses a training split: strips punctuation, lowercases, builds the
/// vocabulary from the surviving tokens and maps OOV words to `<unk>`.
/// Sentences shorter than two tokens are dropped.
pub fn preprocess(trees: &[RawTree], vocab_cap: usize, punct: &TagSet) -> (Vocab, Vec<ProcessedExample>) {
    let stripped = strip_all(trees, punct);
    let vocab = Vocab::build(stripped.iter().flat_map(|t| t.words()), vocab_cap);
    let examples = stripped.into_iter().map(|t| example(t, &vocab)).collect();
    (vocab, examples)
}

/// Preprocesses another split against an existing vocabulary.
pub fn apply_vocab(trees: &[RawTree], vocab: &Vocab, punct: &TagSet) -> Vec<ProcessedExample> {
    strip_all(trees, punct).into_iter().map(|t| example(t, vocab)).collect()
}

fn strip_all(trees: &[RawTree], punct: &TagSet) -> Vec<RawTree> {
    let mut kept = Vec::with_capacity(trees.len());
    for (i, tree) in trees.iter().enumerate() {
        match strip_tree(tree, punct) {
            None => log::warn!("tree {i}: every leaf is punctuation, dropped"),
            Some(t) if t.num_leaves() < 2 => log::debug!("tree {i}: shorter than two tokens, dropped"),
            Some(t) => kept.push(t),
        }
    }
    kept
}

fn example(tree: RawTree, vocab: &Vocab) -> ProcessedExample {
    let tokens: Vec<String> = tree.words().into_iter().map(str::to_string).collect();
    let tags = tree.tags().into_iter().map(str::to_string).collect();
    ProcessedExample {
        sentence: vocab.encode(&tokens),
        tokens,
        tags,
        gold: gold_spans(&tree),
        tree,
    }
}

/// Drops functional tags and coindexation (`NP-SBJ-1` becomes `NP`). Labels
/// that start with `-` (such as `-NONE-`) are kept whole.
pub fn base_label(label: &str) -> &str {
    if label.starts_with('-') {
        return label;
    }
    label.split(['-', '=']).next().unwrap_or(label)
}

/// Every internal node's span in pre-order, including width-one and
/// duplicate spans from unary chains.
pub fn gold_spans(tree: &RawTree) -> Vec<LabeledSpan> {
    fn walk(t: &RawTree, start: usize, out: &mut Vec<LabeledSpan>) -> usize {
        match t {
            RawTree::Leaf { .. } => 1,
            RawTree::Node { label, children } => {
                let slot = out.len();
                out.push(LabeledSpan {
                    start,
                    end: start,
                    label: base_label(label).to_string(),
                });
                let mut width = 0;
                for c in children {
                    width += walk(c, start + width, out);
                }
                out[slot].end = start + width - 1;
                width
            }
        }
    }
    let mut out = Vec::new();
    walk(tree, 0, &mut out);
    out
}

/// Right-nests every node with more than two children:
/// `(X c1 c2 c3)` becomes `(X c1 (X c2 c3))`. Unary nodes are kept.
pub fn binarize_right(tree: &RawTree) -> RawTree {
    match tree {
        RawTree::Leaf { .. } => tree.clone(),
        RawTree::Node { label, children } => {
            let mut kids: Vec<RawTree> = children.iter().map(binarize_right).collect();
            while kids.len() > 2 {
                let right = kids.pop().unwrap();
                let left = kids.pop().unwrap();
                kids.push(RawTree::node(label.clone(), vec![left, right]));
            }
            RawTree::node(label.clone(), kids)
        }
    }
}

/// One sentence per line, ids separated by spaces.
pub fn write_processed<W: Write>(mut out: W, examples: &[ProcessedExample]) -> std::io::Result<()> {
    for ex in examples {
        let ids: Vec<String> = ex.sentence.ids().iter().map(usize::to_string).collect();
        writeln!(out, "{}", ids.join(" "))?;
    }
    Ok(())
}

pub fn read_processed<R: BufRead>(input: R) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        let ids = line
            .split_whitespace()
            .map(|f| {
                f.parse::<usize>().map_err(|e| Error::Parse {
                    line: n + 1,
                    column: 1,
                    msg: format!("bad token id {f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(Sentence::new(ids));
    }
    Ok(out)
}

/// One line per sentence: the sentence index, then `i:j:LABEL` triples,
/// tab separated.
pub fn write_gold_spans<W: Write>(mut out: W, examples: &[ProcessedExample]) -> std::io::Result<()> {
    for (id, ex) in examples.iter().enumerate() {
        write!(out, "{id}")?;
        for s in &ex.gold {
            write!(out, "\t{}:{}:{}", s.start, s.end, s.label)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_gold_spans<R: BufRead>(input: R) -> Result<Vec<(usize, Vec<LabeledSpan>)>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<spans>", e))?;
        let err = |msg: String| Error::Parse {
            line: n + 1,
            column: 1,
            msg,
        };
        let mut fields = line.split('\t');
        let id_field = fields.next().unwrap_or_default();
        let id = id_field.parse().map_err(|_| err(format!("bad sentence id {id_field:?}")))?;
        let mut spans = Vec::new();
        for f in fields {
            let mut parts = f.splitn(3, ':');
            let (Some(i), Some(j), Some(label)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(format!("bad span {f:?}")));
            };
            let (Ok(start), Ok(end)) = (i.parse(), j.parse()) else {
                return Err(err(format!("bad span {f:?}")));
            };
            spans.push(LabeledSpan {
                start,
                end,
                label: label.to_string(),
            });
        }
        out.push((id, spans));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::read_bracketed;

    fn tree(s: &str) -> RawTree {
        read_bracketed(s).unwrap().remove(0)
    }

    fn span(start: usize, end: usize, label: &str) -> LabeledSpan {
        LabeledSpan {
            start,
            end,
            label: label.into(),
        }
    }

    #[test]
    fn punctuation_removed_and_spans_shift() {
        let t = tree("(S (NP (DT The) (, ,) (NN dog)) (VP (VB ran)) (. .))");
        let (vocab, ex) = preprocess(&[t], 10, &TagSet::default());
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].tokens, vec!["the", "dog", "ran"]);
        assert_eq!(ex[0].gold, vec![span(0, 2, "S"), span(0, 1, "NP"), span(2, 2, "VP")]);
        assert_eq!(vocab.len(), 4);
    }

    #[test]
    fn comma_removal_from_three_tokens() {
        let t = tree("(S (NP (NN a)) (, ,) (VP (VB b)))");
        let (_, ex) = preprocess(&[t], 10, &TagSet::default());
        assert_eq!(ex[0].tokens, vec!["a", "b"]);
        assert_eq!(ex[0].gold, vec![span(0, 1, "S"), span(0, 0, "NP"), span(1, 1, "VP")]);
    }

    #[test]
    fn vocab_cap_and_ties() {
        let words = ["a", "b", "c", "a", "b", "a"];
        let v = Vocab::build(words, 2);
        assert_eq!(v.tokens(), &["<unk>", "a", "b"]);
        assert_eq!(v.id("c"), UNK_ID);
        let tied = Vocab::build(["z", "y", "x", "y", "z"], 2);
        assert_eq!(tied.tokens(), &["<unk>", "y", "z"]);
    }

    #[test]
    fn vocab_file_round_trip() {
        let v = Vocab::build(["b", "a", "b"], 10);
        let mut buf = Vec::new();
        v.write(&mut buf).unwrap();
        assert_eq!(buf, b"<unk>\nb\na\n");
        assert_eq!(Vocab::read(&buf[..]).unwrap(), v);
        assert!(Vocab::read(&b"a\n"[..]).is_err());
        assert!(Vocab::read(&b"<unk>\na\na\n"[..]).is_err());
    }

    #[test]
    fn short_and_all_punct_trees_dropped() {
        let trees = [
            tree("(S (. .) (, ,))"),
            tree("(S (NN one) (. .))"),
            tree("(S (NN one) (NN two))"),
        ];
        let (_, ex) = preprocess(&trees, 10, &TagSet::default());
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].tokens, vec!["one", "two"]);
    }

    #[test]
    fn wrapper_root_unwrapped() {
        let t = tree("( (S (NP-SBJ (NN a)) (VP (VB b))) )");
        let (_, ex) = preprocess(&[t], 10, &TagSet::default());
        assert_eq!(ex[0].gold[0], span(0, 1, "S"));
        assert_eq!(ex[0].gold[1], span(0, 0, "NP"));
    }

    #[test]
    fn preprocessing_is_idempotent() {
        let trees = [
            tree("(S (NP (DT The) (NN Dog)) (`` ``) (VP (VBD Ran) (-NONE- *T*)) (. .))"),
            tree("(S (NP (NNP Mr.) (NNP X)) (VP (VBD said)))"),
        ];
        let (v1, ex1) = preprocess(&trees, 3, &TagSet::default());
        let again: Vec<RawTree> = ex1.iter().map(|e| e.tree.clone()).collect();
        let (v2, ex2) = preprocess(&again, 3, &TagSet::default());
        assert_eq!(v1, v2);
        for (a, b) in ex1.iter().zip(&ex2) {
            assert_eq!(a.tokens, b.tokens);
            assert_eq!(a.sentence, b.sentence);
        }
    }

    #[test]
    fn labels_stripped_of_function_tags() {
        assert_eq!(base_label("NP-SBJ-1"), "NP");
        assert_eq!(base_label("PP-LOC"), "PP");
        assert_eq!(base_label("NP=2"), "NP");
        assert_eq!(base_label("-NONE-"), "-NONE-");
        assert_eq!(base_label("S"), "S");
    }

    #[test]
    fn unary_chains_give_duplicate_spans() {
        let spans = gold_spans(&tree("(S (NP (NN a) (NN b)) (VP (VB c)))"));
        assert_eq!(spans, vec![span(0, 2, "S"), span(0, 1, "NP"), span(2, 2, "VP")]);
        let spans = gold_spans(&tree("(S (VP (NP (NN a) (NN b))))"));
        assert_eq!(spans, vec![span(0, 1, "S"), span(0, 1, "VP"), span(0, 1, "NP")]);
    }

    #[test]
    fn binarization() {
        let binary = tree("(S (NP (DT the) (NN dog)) (VP (VB ran)))");
        assert_eq!(binarize_right(&binary), binary);
        let flat = tree("(NP (DT a) (JJ b) (NN c))");
        let bin = binarize_right(&flat);
        assert_eq!(bin.to_string(), "(NP (DT a) (NP (JJ b) (NN c)))");
        let spans: Vec<(usize, usize)> = gold_spans(&bin).iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(spans, vec![(0, 2), (1, 2)]);
        let four = binarize_right(&tree("(X (A a) (B b) (C c) (D d))"));
        assert_eq!(four.to_string(), "(X (A a) (X (B b) (X (C c) (D d))))");
    }

    #[test]
    fn span_files_round_trip() {
        let (_, ex) = preprocess(&[tree("(S (NP (NN a) (NN b)) (VP (VB c)))")], 10, &TagSet::default());
        let mut buf = Vec::new();
        write_gold_spans(&mut buf, &ex).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "0\t0:2:S\t0:1:NP\t2:2:VP\n");
        assert_eq!(read_gold_spans(&buf[..]).unwrap(), vec![(0, ex[0].gold.clone())]);
        let mut ids = Vec::new();
        write_processed(&mut ids, &ex).unwrap();
        assert_eq!(ids, b"1 2 3\n");
        assert_eq!(read_processed(&ids[..]).unwrap()[0], ex[0].sentence);
    }

    fn arb_tree() -> impl Strategy<Value = RawTree> {
        let leaf = ("[A-Z]{1,3}", "[a-z]{1,4}").prop_map(|(t, w)| RawTree::leaf(t, w));
        leaf.prop_recursive(5, 40, 5, |inner| {
            ("[A-Z]{1,3}", prop::collection::vec(inner, 1..5)).prop_map(|(l, c)| RawTree::node(l, c))
        })
    }

    fn max_arity(t: &RawTree) -> usize {
        match t {
            RawTree::Leaf { .. } => 0,
            RawTree::Node { children, .. } => children.iter().map(max_arity).max().unwrap().max(children.len()),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn binarization_preserves_yield(t in arb_tree()) {
            let b = binarize_right(&t);
            prop_assert_eq!(b.words(), t.words());
            prop_assert!(max_arity(&b) <= 2);
            prop_assert_eq!(read_bracketed(&t.to_string()).unwrap().remove(0), t.clone());
        }

        #[test]
        fn gold_spans_nest(t in arb_tree()) {
            let spans = gold_spans(&t);
            let n = t.num_leaves();
            for a in &spans {
                prop_assert!(a.start <= a.end && a.end < n);
                for b in &spans {
                    let crossing = a.start < b.start && b.start <= a.end && a.end < b.end;
                    prop_assert!(!crossing);
                }
            }
        }
    }
}
