use std::fmt::Write as _;

use crate::grammar::{RuleLogProbs, Symbol};

/// Token ids of one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence {
    ids: Vec<usize>,
}

impl Sentence {
    pub fn new(ids: Vec<usize>) -> Self {
        Sentence { ids }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Checks the length and vocabulary constraints of the chart algorithms.
    pub fn validate(&self, vocab_size: usize) -> crate::Result<()> {
        if self.ids.len() < 2 {
            return Err(crate::Error::SentenceTooShort(self.ids.len()));
        }
        for (position, &id) in self.ids.iter().enumerate() {
            if id >= vocab_size {
                return Err(crate::Error::TokenOutOfRange {
                    id,
                    position,
                    vocab_size,
                });
            }
        }
        Ok(())
    }
}

impl From<Vec<usize>> for Sentence {
    fn from(ids: Vec<usize>) -> Self {
        Sentence::new(ids)
    }
}

/// A node of a binary parse tree covering tokens `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeNode {
    pub start: usize,
    pub end: usize,
    pub symbol: Symbol,
    /// `(left, right)` node indices; `None` for preterminal leaves.
    pub children: Option<(usize, usize)>,
}

/// Binary parse tree stored as a node arena in pre-order (root first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    /// Builds a tree from pre-order nodes. The first node is the root.
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Self {
        debug_assert!(!nodes.is_empty());
        Tree { nodes }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.root().end + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Every labeled span, including width-one preterminal spans.
    pub fn labeled_spans(&self) -> Vec<(usize, usize, Symbol)> {
        self.nodes.iter().map(|n| (n.start, n.end, n.symbol)).collect()
    }

    /// Spans of nonterminal nodes.
    pub fn constituent_spans(&self) -> Vec<(usize, usize, Symbol)> {
        self.nodes
            .iter()
            .filter(|n| n.children.is_some())
            .map(|n| (n.start, n.end, n.symbol))
            .collect()
    }

    /// Preterminal of every token, left to right.
    pub fn preterminals(&self) -> Vec<usize> {
        let mut leaves: Vec<(usize, usize)> = self
            .nodes
            .iter()
            .filter_map(|n| match (n.children, n.symbol) {
                (None, Symbol::Preterminal(t)) => Some((n.start, t)),
                _ => None,
            })
            .collect();
        leaves.sort_unstable();
        leaves.into_iter().map(|(_, t)| t).collect()
    }

    /// Log-probability of the tree's derivation under `rules`, accumulated
    /// bottom-up as `rule + (left + right)` and finally `root + top`.
    pub fn log_prob(&self, sentence: &Sentence, rules: &RuleLogProbs) -> f64 {
        let top = self.subtree_score(0, sentence, rules);
        match self.root().symbol {
            Symbol::Nonterminal(a) => rules.root(a) + top,
            Symbol::Preterminal(_) => f64::NEG_INFINITY,
        }
    }

    fn subtree_score(&self, idx: usize, sentence: &Sentence, rules: &RuleLogProbs) -> f64 {
        let node = &self.nodes[idx];
        let n = rules.num_nonterminals();
        match (node.children, node.symbol) {
            (None, Symbol::Preterminal(t)) => rules.terminal(t, sentence.ids()[node.start]),
            (Some((l, r)), Symbol::Nonterminal(a)) => {
                let b = self.nodes[l].symbol.child_index(n);
                let c = self.nodes[r].symbol.child_index(n);
                rules.binary(a, b, c)
                    + (self.subtree_score(l, sentence, rules) + self.subtree_score(r, sentence, rules))
            }
            _ => f64::NEG_INFINITY,
        }
    }

    /// Single-line bracketed form, e.g. `(NT-01 (T-02 the) (T-03 dog))`.
    pub fn to_bracketed<S: AsRef<str>>(&self, words: &[S]) -> String {
        let mut out = String::new();
        self.write_node(0, &mut |i| words[i].as_ref().to_string(), &mut out);
        out
    }

    /// Bracketed form with terminals dropped, e.g. `(NT-01 (T-02) (T-03))`.
    pub fn unlexicalized(&self) -> String {
        self.subtree_shape(0)
    }

    /// Unlexicalized shape of the subtree rooted at node `idx`.
    pub fn subtree_shape(&self, idx: usize) -> String {
        let mut out = String::new();
        self.write_shape(idx, &mut out);
        out
    }

    fn write_shape(&self, idx: usize, out: &mut String) {
        let node = &self.nodes[idx];
        out.push('(');
        out.push_str(&node.symbol.name());
        if let Some((l, r)) = node.children {
            out.push(' ');
            self.write_shape(l, out);
            out.push(' ');
            self.write_shape(r, out);
        }
        out.push(')');
    }

    fn write_node(&self, idx: usize, word: &mut dyn FnMut(usize) -> String, out: &mut String) {
        let node = &self.nodes[idx];
        let _ = write!(out, "({}", node.symbol);
        match node.children {
            Some((l, r)) => {
                out.push(' ');
                self.write_node(l, word, out);
                out.push(' ');
                self.write_node(r, word, out);
            }
            None => {
                out.push(' ');
                out.push_str(&escape_token(&word(node.start)));
            }
        }
        out.push(')');
    }
}

/// Replaces brackets inside tokens so output re-parses as an s-expression.
pub fn escape_token(token: &str) -> String {
    match token {
        "(" => "-LRB-".to_string(),
        ")" => "-RRB-".to_string(),
        t => t.replace('(', "-LRB-").replace(')', "-RRB-"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_tree() -> Tree {
        // (NT-01 (T-01 a) (NT-02 (T-02 b) (T-01 c)))
        Tree::from_nodes(vec![
            TreeNode { start: 0, end: 2, symbol: Symbol::Nonterminal(0), children: Some((1, 2)) },
            TreeNode { start: 0, end: 0, symbol: Symbol::Preterminal(0), children: None },
            TreeNode { start: 1, end: 2, symbol: Symbol::Nonterminal(1), children: Some((3, 4)) },
            TreeNode { start: 1, end: 1, symbol: Symbol::Preterminal(1), children: None },
            TreeNode { start: 2, end: 2, symbol: Symbol::Preterminal(0), children: None },
        ])
    }

    #[test]
    fn bracketed_output() {
        let t = small_tree();
        assert_eq!(t.to_bracketed(&["a", "b", "c"]), "(NT-01 (T-01 a) (NT-02 (T-02 b) (T-01 c)))");
        assert_eq!(t.unlexicalized(), "(NT-01 (T-01) (NT-02 (T-02) (T-01)))");
        assert_eq!(t.to_bracketed(&["(", "b", "c"]), "(NT-01 (T-01 -LRB-) (NT-02 (T-02 b) (T-01 c)))");
    }

    #[test]
    fn spans_and_preterminals() {
        let t = small_tree();
        assert_eq!(t.preterminals(), vec![0, 1, 0]);
        let spans: Vec<_> = t.constituent_spans().iter().map(|&(i, j, _)| (i, j)).collect();
        assert_eq!(spans, vec![(0, 2), (1, 2)]);
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn sentence_validation() {
        assert!(matches!(
            Sentence::new(vec![1]).validate(5),
            Err(crate::Error::SentenceTooShort(1))
        ));
        assert!(matches!(
            Sentence::new(vec![1, 7]).validate(5),
            Err(crate::Error::TokenOutOfRange { id: 7, position: 1, .. })
        ));
        assert!(Sentence::new(vec![0, 4]).validate(5).is_ok());
    }
}
