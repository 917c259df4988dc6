//! Helpers shared by the acceptance checks.
#![allow(dead_code)]

use cpcfg::chart::{Sentence, Tree, TreeNode};
use cpcfg::diffmath::{log_softmax_into, Tensor};
use cpcfg::grammar::{RuleLogProbs, Symbol};
use rand::Rng;
use rand_distr::StandardNormal;

/// Relative error with a small absolute floor so that two gradients that
/// are both essentially zero compare equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Five-point central difference of `f` along coordinate `i` of `x`.
pub fn five_point(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut y = x.to_vec();
    let mut at = |d: f64| {
        y[i] = x[i] + d;
        f(&y)
    };
    let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
    (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
}

pub fn normal_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Values bounded away from zero, so kinked primitives stay smooth under
/// finite differences.
pub fn off_zero_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m: f64 = rng.random_range(0.1..1.5);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect()
}

pub fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn normalized_rows(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let raw = normal_vec(rng, cols, scale);
        log_softmax_into(&raw, &mut out[r * cols..(r + 1) * cols]);
    }
    out
}

/// Rule tables with every row drawn from a softmax of Gaussian scores.
pub fn random_rules(rng: &mut impl Rng, n: usize, p: usize, v: usize) -> RuleLogProbs {
    let s = n + p;
    RuleLogProbs::new(
        n,
        p,
        v,
        normalized_rows(rng, 1, n, 1.5),
        normalized_rows(rng, n, s * s, 1.5),
        normalized_rows(rng, p, v, 1.5),
    )
    .unwrap()
}

pub fn random_sentence(rng: &mut impl Rng, len: usize, v: usize) -> Sentence {
    Sentence::new((0..len).map(|_| rng.random_range(0..v)).collect())
}

/// The generating grammar of the recovery experiment: two nonterminals,
/// three preterminals with disjoint word classes and twenty words.
///
/// ```text
/// ROOT -> A0
/// A0 -> A1 A0 (0.3) | T2 A1 (0.5) | T2 T1 (0.2)
/// A1 -> T0 T1 (1.0)
/// T0 -> w00..w05, T1 -> w06..w12, T2 -> w13..w19, Zipf-like weights
/// ```
pub struct SyntheticGrammar {
    pub rules: RuleLogProbs,
    pub words: Vec<String>,
}

pub const SYN_NT: usize = 2;
pub const SYN_PT: usize = 3;
pub const SYN_VOCAB: usize = 20;
const CLASSES: [std::ops::Range<usize>; 3] = [0..6, 6..13, 13..20];

impl SyntheticGrammar {
    pub fn new() -> Self {
        let (n, p, v) = (SYN_NT, SYN_PT, SYN_VOCAB);
        let s = n + p;
        let (t0, t1, t2) = (n, n + 1, n + 2);
        let ninf = f64::NEG_INFINITY;
        let root = vec![0.0, ninf];
        let mut binary = vec![ninf; n * s * s];
        binary[t2 * s + t1] = 0.2f64.ln();
        binary[t2 * s + 1] = 0.5f64.ln();
        binary[s + 0] = 0.3f64.ln();
        binary[s * s + t0 * s + t1] = 0.0;
        let mut terminal = vec![ninf; p * v];
        for (t, class) in CLASSES.iter().enumerate() {
            let z: f64 = class.clone().enumerate().map(|(k, _)| 1.0 / (k as f64 + 2.0)).sum();
            for (k, w) in class.clone().enumerate() {
                terminal[t * v + w] = (1.0 / (k as f64 + 2.0) / z).ln();
            }
        }
        SyntheticGrammar {
            rules: RuleLogProbs::new(n, p, v, root, binary, terminal).unwrap(),
            words: (0..v).map(|w| format!("w{w:02}")).collect(),
        }
    }

    fn pick(rng: &mut impl Rng, logp: &[f64]) -> usize {
        let mut u: f64 = rng.random();
        for (i, lp) in logp.iter().enumerate() {
            u -= lp.exp();
            if u <= 0.0 {
                return i;
            }
        }
        logp.iter().rposition(|lp| lp.is_finite()).unwrap()
    }

    /// Samples a sentence and its tree; child symbols use the shared index
    /// space of the rule tables.
    pub fn sample(&self, rng: &mut impl Rng) -> (Vec<usize>, Tree) {
        let n = SYN_NT;
        let s = n + SYN_PT;
        // Expand symbols top down into (symbol, children) in pre-order.
        struct Raw {
            sym: usize,
            children: Option<(usize, usize)>,
            word: Option<usize>,
        }
        fn expand(g: &SyntheticGrammar, rng: &mut impl Rng, sym: usize, out: &mut Vec<Raw>) -> usize {
            let (n, s) = (SYN_NT, SYN_NT + SYN_PT);
            let idx = out.len();
            out.push(Raw { sym, children: None, word: None });
            if sym >= n {
                let t = sym - n;
                let row = &g.rules.terminal_table()[t * SYN_VOCAB..(t + 1) * SYN_VOCAB];
                out[idx].word = Some(SyntheticGrammar::pick(rng, row));
            } else {
                let pair = SyntheticGrammar::pick(rng, g.rules.binary_row(sym));
                let l = expand(g, rng, pair / s, out);
                let r = expand(g, rng, pair % s, out);
                out[idx].children = Some((l, r));
            }
            idx
        }
        let mut raw = Vec::new();
        let top = Self::pick(rng, self.rules.root_table());
        expand(self, rng, top, &mut raw);
        let _ = s;
        // Assign spans by a post-order pass over pre-order nodes.
        let mut words = Vec::new();
        let mut spans = vec![(0, 0); raw.len()];
        fn spans_of(raw: &[Raw], i: usize, words: &mut Vec<usize>, spans: &mut [(usize, usize)]) {
            match raw[i].children {
                None => {
                    spans[i] = (words.len(), words.len());
                    words.push(raw[i].word.unwrap());
                }
                Some((l, r)) => {
                    spans_of(raw, l, words, spans);
                    spans_of(raw, r, words, spans);
                    spans[i] = (spans[l].0, spans[r].1);
                }
            }
        }
        spans_of(&raw, 0, &mut words, &mut spans);
        let nodes = raw
            .iter()
            .zip(&spans)
            .map(|(r, &(start, end))| TreeNode {
                start,
                end,
                symbol: Symbol::from_child_index(r.sym, n),
                children: r.children,
            })
            .collect();
        (words, Tree::from_nodes(nodes))
    }

    /// `count` samples with lengths in `2..=max_len`.
    pub fn corpus(&self, rng: &mut impl Rng, count: usize, max_len: usize) -> Vec<(Vec<usize>, Tree)> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let (w, t) = self.sample(rng);
            if (2..=max_len).contains(&w.len()) {
                out.push((w, t));
            }
        }
        out
    }
}
