use super::inside::{collect_splits, fill_leaves, Chart, Tables};
use super::tree::{Sentence, Tree, TreeNode};
use crate::diffmath::ParamStore;
use crate::error::Result;
use crate::grammar::{compound_rule_logprobs, GrammarModel, RuleLogProbs, Symbol};

/// Best tree and its log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiParse {
    pub tree: Tree,
    pub score: f64,
}

#[derive(Clone, Copy)]
struct Backpointer {
    k: usize,
    left: usize,
    right: usize,
}

/// Most probable binary tree (CKY with max instead of sum).
///
/// Ties are broken towards the smallest split point, then the smallest
/// `(B, C)` pair in lexicographic order, and at the root towards the smallest
/// nonterminal index. The returned score equals [`Tree::log_prob`] of the
/// returned tree bit for bit.
pub fn viterbi_parse(sentence: &Sentence, rules: &RuleLogProbs) -> Result<ViterbiParse> {
    let t = Tables::from_rules(rules);
    t.check(sentence)?;
    let n = sentence.len();
    let s = t.num_symbols();
    let ss = s * s;
    let n_nt = t.num_nonterminals;

    let mut chart = Chart::new(n, s);
    fill_leaves(&mut chart, &t, sentence);
    let mut back: Vec<Option<Backpointer>> = vec![None; n * n * n_nt];
    let bp_index = |i: usize, j: usize, a: usize| (i * n + j) * n_nt + a;

    let mut splits = Vec::new();
    for width in 2..=n {
        for i in 0..=n - width {
            let j = i + width - 1;
            collect_splits(&chart, &t, i, j, &mut splits);
            for a in 0..n_nt {
                let row = &t.binary[a * ss..(a + 1) * ss];
                let mut best = f64::NEG_INFINITY;
                let mut arg = None;
                for sp in &splits {
                    let score = row[sp.pair] + sp.child_score;
                    if score > best {
                        best = score;
                        arg = Some(Backpointer {
                            k: sp.k,
                            left: sp.left,
                            right: sp.right,
                        });
                    }
                }
                chart.span_mut(i, j)[a] = best;
                back[bp_index(i, j, a)] = arg;
            }
        }
    }

    let top = chart.span(0, n - 1);
    let mut best = f64::NEG_INFINITY;
    let mut best_a = 0;
    for a in 0..n_nt {
        let score = t.root[a] + top[a];
        if score > best {
            best = score;
            best_a = a;
        }
    }

    let mut nodes = Vec::with_capacity(2 * n - 1);
    build(&back, &bp_index, n_nt, 0, n - 1, best_a, &mut nodes);
    Ok(ViterbiParse {
        tree: Tree::from_nodes(nodes),
        score: best,
    })
}

fn build(
    back: &[Option<Backpointer>],
    bp_index: &dyn Fn(usize, usize, usize) -> usize,
    n_nt: usize,
    i: usize,
    j: usize,
    symbol: usize,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let idx = nodes.len();
    let sym = Symbol::from_child_index(symbol, n_nt);
    nodes.push(TreeNode {
        start: i,
        end: j,
        symbol: sym,
        children: None,
    });
    if i == j {
        return idx;
    }
    // With no derivation at all every entry is -inf; fall back to a
    // right-branching skeleton so a tree is still returned.
    let bp = back[bp_index(i, j, symbol)].unwrap_or(Backpointer {
        k: i,
        left: n_nt,
        right: if j == i + 1 { n_nt } else { 0 },
    });
    let l = build(back, bp_index, n_nt, i, bp.k, bp.left, nodes);
    let r = build(back, bp_index, n_nt, bp.k + 1, j, bp.right, nodes);
    nodes[idx].children = Some((l, r));
    idx
}

/// Approximate MAP tree of a compound PCFG: the Viterbi tree under the rule
/// probabilities obtained at the posterior mean.
pub fn map_parse_compound(
    sentence: &Sentence,
    model: &GrammarModel,
    store: &ParamStore,
    posterior_mean: &[f64],
) -> Result<ViterbiParse> {
    let rules = compound_rule_logprobs(model, store, posterior_mean)?;
    viterbi_parse(sentence, &rules)
}
