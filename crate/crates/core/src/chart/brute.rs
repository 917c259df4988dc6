//! Exhaustive enumeration of derivations, used as an independent check on
//! the chart algorithms for short sentences and tiny grammars.

use super::tree::{Sentence, Tree, TreeNode};
use crate::error::{Error, Result};
use crate::grammar::{RuleLogProbs, Symbol};

/// Maximum number of derivations [`for_each_derivation`] will visit.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;
/// Maximum sentence length accepted by the enumerator.
pub const MAX_ENUMERATION_LEN: usize = 8;

/// Unlabeled binary bracketing of `len` tokens, stored in pre-order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape {
    nodes: Vec<ShapeNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ShapeNode {
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

impl Shape {
    /// Internal (non-leaf) spans.
    pub fn internal_spans(&self) -> Vec<(usize, usize)> {
        self.nodes
            .iter()
            .filter(|n| n.children.is_some())
            .map(|n| (n.start, n.end))
            .collect()
    }
}

/// All binary bracketings of `len` tokens; there are Catalan(len - 1).
pub fn enumerate_shapes(len: usize) -> Vec<Shape> {
    fn rec(i: usize, j: usize) -> Vec<Vec<ShapeNode>> {
        if i == j {
            return vec![vec![ShapeNode {
                start: i,
                end: i,
                children: None,
            }]];
        }
        let mut out = Vec::new();
        for k in i..j {
            let lefts = rec(i, k);
            let rights = rec(k + 1, j);
            for l in &lefts {
                for r in &rights {
                    let mut nodes = Vec::with_capacity(1 + l.len() + r.len());
                    nodes.push(ShapeNode {
                        start: i,
                        end: j,
                        children: Some((1, 1 + l.len())),
                    });
                    nodes.extend(l.iter().map(|n| shift(*n, 1)));
                    nodes.extend(r.iter().map(|n| shift(*n, 1 + l.len())));
                    out.push(nodes);
                }
            }
        }
        out
    }
    fn shift(mut n: ShapeNode, by: usize) -> ShapeNode {
        n.children = n.children.map(|(l, r)| (l + by, r + by));
        n
    }
    if len == 0 {
        return Vec::new();
    }
    rec(0, len - 1).into_iter().map(|nodes| Shape { nodes }).collect()
}

/// A fully labeled derivation: a shape plus a symbol for every node.
pub struct Derivation<'a> {
    shape: &'a Shape,
    /// Child-space symbol index per shape node.
    labels: &'a [usize],
    num_nonterminals: usize,
}

/// One rule application inside a derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Root(usize),
    /// `A -> B C` with `B`, `C` in the shared child index space.
    Binary(usize, usize, usize),
    Terminal(usize, usize),
}

impl Derivation<'_> {
    /// Every rule used, root rule first.
    pub fn rules(&self, sentence: &Sentence) -> Vec<Rule> {
        let mut out = vec![Rule::Root(self.labels[0])];
        for (idx, node) in self.shape.nodes.iter().enumerate() {
            match node.children {
                Some((l, r)) => out.push(Rule::Binary(self.labels[idx], self.labels[l], self.labels[r])),
                None => out.push(Rule::Terminal(
                    self.labels[idx] - self.num_nonterminals,
                    sentence.ids()[node.start],
                )),
            }
        }
        out
    }

    pub fn to_tree(&self) -> Tree {
        Tree::from_nodes(
            self.shape
                .nodes
                .iter()
                .zip(self.labels)
                .map(|(n, &label)| TreeNode {
                    start: n.start,
                    end: n.end,
                    symbol: Symbol::from_child_index(label, self.num_nonterminals),
                    children: n.children,
                })
                .collect(),
        )
    }
}

fn catalan(n: usize) -> u128 {
    let mut c: u128 = 1;
    for k in 0..n as u128 {
        c = c * 2 * (2 * k + 1) / (k + 2);
    }
    c
}

/// Number of labeled derivations of a sentence of length `len`.
pub fn derivation_count(len: usize, num_nonterminals: usize, num_preterminals: usize) -> u128 {
    if len == 0 {
        return 0;
    }
    catalan(len - 1)
        * (num_nonterminals as u128).pow(len as u32 - 1)
        * (num_preterminals as u128).pow(len as u32)
}

/// Calls `visit` with every derivation of `sentence` and its log-probability.
///
/// Scores accumulate as `rule + (left + right)` per node and `root + top` at
/// the end, the same association the Viterbi decoder uses.
pub fn for_each_derivation(
    sentence: &Sentence,
    rules: &RuleLogProbs,
    mut visit: impl FnMut(&Derivation, f64),
) -> Result<()> {
    sentence.validate(rules.vocab_size())?;
    rules.check_valid()?;
    let n = sentence.len();
    if n > MAX_ENUMERATION_LEN {
        return Err(Error::invalid(
            "brute_force",
            format!("sentence length {n} exceeds enumeration limit {MAX_ENUMERATION_LEN}"),
        ));
    }
    let (n_nt, n_pt) = (rules.num_nonterminals(), rules.num_preterminals());
    let needed = derivation_count(n, n_nt, n_pt);
    if needed > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            needed,
            limit: ENUMERATION_LIMIT,
        });
    }

    for shape in enumerate_shapes(n) {
        let m = shape.nodes.len();
        // Odometer over node labels; internal nodes range over N, leaves over P.
        let base: Vec<usize> = shape
            .nodes
            .iter()
            .map(|nd| if nd.children.is_some() { 0 } else { n_nt })
            .collect();
        let radix: Vec<usize> = shape
            .nodes
            .iter()
            .map(|nd| if nd.children.is_some() { n_nt } else { n_pt })
            .collect();
        let mut digits = vec![0usize; m];
        let mut labels = base.clone();
        let mut scores = vec![0.0f64; m];
        loop {
            // Post-order evaluation: children follow their parent in pre-order,
            // so a reverse sweep sees children first.
            for idx in (0..m).rev() {
                let nd = shape.nodes[idx];
                scores[idx] = match nd.children {
                    None => rules.terminal(labels[idx] - n_nt, sentence.ids()[nd.start]),
                    Some((l, r)) => rules.binary(labels[idx], labels[l], labels[r]) + (scores[l] + scores[r]),
                };
            }
            let total = rules.root(labels[0]) + scores[0];
            visit(
                &Derivation {
                    shape: &shape,
                    labels: &labels,
                    num_nonterminals: n_nt,
                },
                total,
            );

            let mut pos = 0;
            loop {
                if pos == m {
                    break;
                }
                digits[pos] += 1;
                if digits[pos] < radix[pos] {
                    labels[pos] = base[pos] + digits[pos];
                    break;
                }
                digits[pos] = 0;
                labels[pos] = base[pos];
                pos += 1;
            }
            if pos == m {
                break;
            }
        }
    }
    Ok(())
}

/// Log of the summed probability of every derivation.
pub fn brute_force_logprob(sentence: &Sentence, rules: &RuleLogProbs) -> Result<f64> {
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for_each_derivation(sentence, rules, |_, score| {
        if score == f64::NEG_INFINITY {
            return;
        }
        if score > max {
            sum = sum * (max - score).exp() + 1.0;
            max = score;
        } else {
            sum += (score - max).exp();
        }
    })?;
    Ok(if max == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        max + sum.ln()
    })
}

/// Highest derivation score and every tree attaining it.
pub fn brute_force_best(sentence: &Sentence, rules: &RuleLogProbs) -> Result<(f64, Vec<Tree>)> {
    let mut best = f64::NEG_INFINITY;
    let mut trees = Vec::new();
    for_each_derivation(sentence, rules, |d, score| {
        if score > best {
            best = score;
            trees.clear();
            trees.push(d.to_tree());
        } else if score == best && best > f64::NEG_INFINITY {
            trees.push(d.to_tree());
        }
    })?;
    Ok((best, trees))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalan_numbers() {
        let counts: Vec<usize> = (1..=6).map(|n| enumerate_shapes(n).len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 5, 14, 42]);
        assert_eq!(catalan(4), 14);
    }

    #[test]
    fn shapes_are_distinct() {
        let shapes = enumerate_shapes(5);
        for (i, a) in shapes.iter().enumerate() {
            for b in &shapes[i + 1..] {
                assert_ne!(a.internal_spans(), b.internal_spans());
            }
        }
    }

    #[test]
    fn single_derivation_grammar() {
        // |N| = |P| = |Σ| = 1: exactly one derivation for a 2-token sentence.
        let rules = RuleLogProbs::new(1, 1, 1, vec![0.0], vec![-1.0, -2.0, -3.0, -0.5], vec![0.0]).unwrap();
        let s = Sentence::new(vec![0, 0]);
        assert_eq!(derivation_count(2, 1, 1), 1);
        let lp = brute_force_logprob(&s, &rules).unwrap();
        assert_eq!(lp, -0.5);
    }

    #[test]
    fn limits_are_enforced() {
        let rules = RuleLogProbs::new(4, 4, 1, vec![0.0; 4], vec![0.0; 4 * 64], vec![0.0; 4]).unwrap();
        let s = Sentence::new(vec![0; 8]);
        assert!(matches!(
            brute_force_logprob(&s, &rules),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }
}
