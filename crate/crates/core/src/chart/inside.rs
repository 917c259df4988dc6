//! Log-space inside algorithm and its reverse pass.
//!
//! Spans are inclusive token ranges `(i, j)`. Width-one spans hold
//! preterminal scores; wider spans hold nonterminal scores. Each nonterminal
//! entry is
//!
//! ```text
//! β[i][j][A] = logsumexp_{k, B, C} ( log π(A -> B C) + β[i][k][B] + β[k+1][j][C] )
//! ```
//!
//! and the sentence score is `logsumexp_A (log π(S -> A) + β[0][n-1][A])`.

use super::tree::Sentence;
use crate::diffmath::{logsumexp, CustomOp, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::grammar::{RuleLogProbs, RuleVars};

/// Borrowed view of the three rule tables.
#[derive(Clone, Copy)]
pub(crate) struct Tables<'a> {
    pub num_nonterminals: usize,
    pub num_preterminals: usize,
    pub vocab_size: usize,
    pub root: &'a [f64],
    pub binary: &'a [f64],
    pub terminal: &'a [f64],
}

impl<'a> Tables<'a> {
    pub fn from_rules(rules: &'a RuleLogProbs) -> Self {
        Tables {
            num_nonterminals: rules.num_nonterminals(),
            num_preterminals: rules.num_preterminals(),
            vocab_size: rules.vocab_size(),
            root: rules.root_table(),
            binary: rules.binary_table(),
            terminal: rules.terminal_table(),
        }
    }

    pub fn num_symbols(&self) -> usize {
        self.num_nonterminals + self.num_preterminals
    }

    pub fn check(&self, sentence: &Sentence) -> Result<()> {
        sentence.validate(self.vocab_size)?;
        for (what, table) in [
            ("root rule table", self.root),
            ("binary rule table", self.binary),
            ("terminal rule table", self.terminal),
        ] {
            if let Some(index) = table.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(Error::NonFinite { what, index });
            }
        }
        Ok(())
    }

    /// Symbols that may label a span of the given width.
    pub fn symbols_for_width(&self, width: usize) -> std::ops::Range<usize> {
        if width == 1 {
            self.num_nonterminals..self.num_symbols()
        } else {
            0..self.num_nonterminals
        }
    }
}

/// Triangular chart of log inside scores.
#[derive(Debug, Clone)]
pub struct Chart {
    len: usize,
    num_symbols: usize,
    scores: Vec<f64>,
}

impl Chart {
    pub(crate) fn new(len: usize, num_symbols: usize) -> Self {
        Chart {
            len,
            num_symbols,
            scores: vec![f64::NEG_INFINITY; len * len * num_symbols],
        }
    }

    #[inline]
    pub(crate) fn offset(&self, i: usize, j: usize) -> usize {
        (i * self.len + j) * self.num_symbols
    }

    /// Scores of every symbol for span `(i, j)` (inclusive); entries for
    /// symbols that cannot label a span of this width are `-inf`.
    pub fn span(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j);
        &self.scores[o..o + self.num_symbols]
    }

    pub(crate) fn span_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let o = self.offset(i, j);
        &mut self.scores[o..o + self.num_symbols]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// One way of splitting a span: split point `k` and child symbols `B`, `C`
/// with their summed inside scores.
#[derive(Clone, Copy)]
pub(crate) struct Split {
    pub k: usize,
    pub pair: usize,
    pub left: usize,
    pub right: usize,
    pub child_score: f64,
}

/// Enumerates the splits of span `(i, j)` in the order `k`, then `B`, then
/// `C` (ascending), skipping impossible child pairs. `child_score` is
/// `left + right`.
pub(crate) fn collect_splits(chart: &Chart, t: &Tables, i: usize, j: usize, out: &mut Vec<Split>) {
    out.clear();
    let s = t.num_symbols();
    for k in i..j {
        let left_syms = t.symbols_for_width(k - i + 1);
        let right_syms = t.symbols_for_width(j - k);
        let left = chart.span(i, k);
        let right = chart.span(k + 1, j);
        for b in left_syms {
            let lb = left[b];
            if lb == f64::NEG_INFINITY {
                continue;
            }
            for c in right_syms.clone() {
                let rc = right[c];
                if rc == f64::NEG_INFINITY {
                    continue;
                }
                out.push(Split {
                    k,
                    pair: b * s + c,
                    left: b,
                    right: c,
                    child_score: lb + rc,
                });
            }
        }
    }
}

pub(crate) fn fill_leaves(chart: &mut Chart, t: &Tables, sentence: &Sentence) {
    let n_nt = t.num_nonterminals;
    for (i, &w) in sentence.ids().iter().enumerate() {
        let cell = chart.span_mut(i, i);
        for p in 0..t.num_preterminals {
            cell[n_nt + p] = t.terminal[p * t.vocab_size + w];
        }
    }
}

/// Runs the inside pass, returning the chart and `log p(x)`.
pub(crate) fn inside_chart(sentence: &Sentence, t: &Tables) -> (Chart, f64) {
    let n = sentence.len();
    let s = t.num_symbols();
    let ss = s * s;
    let mut chart = Chart::new(n, s);
    fill_leaves(&mut chart, t, sentence);
    let mut splits = Vec::new();
    let mut cell = vec![f64::NEG_INFINITY; t.num_nonterminals];
    for width in 2..=n {
        for i in 0..=n - width {
            let j = i + width - 1;
            collect_splits(&chart, t, i, j, &mut splits);
            for (a, out) in cell.iter_mut().enumerate() {
                let row = &t.binary[a * ss..(a + 1) * ss];
                let mut max = f64::NEG_INFINITY;
                for sp in &splits {
                    max = max.max(row[sp.pair] + sp.child_score);
                }
                *out = if max == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    let sum: f64 = splits.iter().map(|sp| (row[sp.pair] + sp.child_score - max).exp()).sum();
                    max + sum.ln()
                };
            }
            chart.span_mut(i, j)[..t.num_nonterminals].copy_from_slice(&cell);
        }
    }
    let top = chart.span(0, n - 1);
    let root_scores: Vec<f64> = (0..t.num_nonterminals).map(|a| t.root[a] + top[a]).collect();
    (chart, logsumexp(&root_scores))
}

/// Gradients of `log p(x)` with respect to the three rule tables, scaled by
/// `upstream`. This is the outside pass: each adjoint is the posterior
/// expected count of the corresponding chart item.
pub(crate) fn inside_backward(
    sentence: &Sentence,
    t: &Tables,
    chart: &Chart,
    log_z: f64,
    upstream: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = sentence.len();
    let s = t.num_symbols();
    let ss = s * s;
    let n_nt = t.num_nonterminals;
    let mut g_root = vec![0.0; t.root.len()];
    let mut g_bin = vec![0.0; t.binary.len()];
    let mut g_term = vec![0.0; t.terminal.len()];
    if log_z == f64::NEG_INFINITY || upstream == 0.0 {
        return (g_root, g_bin, g_term);
    }

    let mut adj = Chart::new(n, s);
    adj.scores.fill(0.0);
    let top = chart.span(0, n - 1).to_vec();
    for a in 0..n_nt {
        let w = upstream * (t.root[a] + top[a] - log_z).exp();
        g_root[a] = w;
        adj.span_mut(0, n - 1)[a] = w;
    }

    let mut splits = Vec::new();
    for width in (2..=n).rev() {
        for i in 0..=n - width {
            let j = i + width - 1;
            let cell_adj = adj.span(i, j)[..n_nt].to_vec();
            if cell_adj.iter().all(|&g| g == 0.0) {
                continue;
            }
            collect_splits(chart, t, i, j, &mut splits);
            let cell = chart.span(i, j);
            for (a, &g) in cell_adj.iter().enumerate() {
                let beta = cell[a];
                if g == 0.0 || beta == f64::NEG_INFINITY {
                    continue;
                }
                let row = &t.binary[a * ss..(a + 1) * ss];
                for sp in &splits {
                    let w = g * (row[sp.pair] + sp.child_score - beta).exp();
                    if w == 0.0 {
                        continue;
                    }
                    g_bin[a * ss + sp.pair] += w;
                    adj.span_mut(i, sp.k)[sp.left] += w;
                    adj.span_mut(sp.k + 1, j)[sp.right] += w;
                }
            }
        }
    }
    for (i, &w) in sentence.ids().iter().enumerate() {
        let cell = adj.span(i, i);
        for p in 0..t.num_preterminals {
            g_term[p * t.vocab_size + w] += cell[n_nt + p];
        }
    }
    (g_root, g_bin, g_term)
}

/// `log p(x)` under fixed rule tables (no tape).
pub fn inside(sentence: &Sentence, rules: &RuleLogProbs) -> Result<f64> {
    let t = Tables::from_rules(rules);
    t.check(sentence)?;
    Ok(inside_chart(sentence, &t).1)
}

/// Inside chart and `log p(x)` under fixed rule tables.
pub fn inside_with_chart(sentence: &Sentence, rules: &RuleLogProbs) -> Result<(Chart, f64)> {
    let t = Tables::from_rules(rules);
    t.check(sentence)?;
    Ok(inside_chart(sentence, &t))
}

struct InsideOp {
    sentence: Sentence,
    chart: Chart,
    num_nonterminals: usize,
    num_preterminals: usize,
    vocab_size: usize,
}

impl CustomOp for InsideOp {
    fn name(&self) -> &'static str {
        "inside"
    }

    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let t = Tables {
            num_nonterminals: self.num_nonterminals,
            num_preterminals: self.num_preterminals,
            vocab_size: self.vocab_size,
            root: inputs[0].data(),
            binary: inputs[1].data(),
            terminal: inputs[2].data(),
        };
        let (gr, gb, gt) = inside_backward(&self.sentence, &t, &self.chart, output.item(), grad.item());
        let wrap = |g: Vec<f64>, like: &Tensor| Some(Tensor::new(like.shape().to_vec(), g).expect("gradient shape"));
        vec![wrap(gr, inputs[0]), wrap(gb, inputs[1]), wrap(gt, inputs[2])]
    }
}

/// `log p(x)` (or `log p(x | z)` for compound rules) recorded on `tape`.
///
/// Differentiating the result yields, for each rule, its expected count
/// under the tree posterior `p(t | x)`.
pub fn inside_logprob(tape: &mut Tape, sentence: &Sentence, rules: &RuleVars) -> Result<Var> {
    let (chart, log_z) = {
        let t = Tables {
            num_nonterminals: rules.num_nonterminals,
            num_preterminals: rules.num_preterminals,
            vocab_size: rules.vocab_size,
            root: tape.value(rules.root).data(),
            binary: tape.value(rules.binary).data(),
            terminal: tape.value(rules.terminal).data(),
        };
        t.check(sentence)?;
        inside_chart(sentence, &t)
    };
    let op = InsideOp {
        sentence: sentence.clone(),
        chart,
        num_nonterminals: rules.num_nonterminals,
        num_preterminals: rules.num_preterminals,
        vocab_size: rules.vocab_size,
    };
    Ok(tape.custom(&[rules.root, rules.binary, rules.terminal], Tensor::scalar(log_z), Box::new(op)))
}
