//! Latent-space inspection: nearest neighbors between posterior means and
//! principal components of the means attached to a given subtree shape.

mod pca;

pub use pca::{extremes, top_principal_component, PrincipalComponent, PCA_MAX_ITERATIONS, PCA_TOLERANCE};

use crate::chart::Tree;
use crate::error::{Error, Result};

/// Cosine similarity; zero when either vector is all zeros.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub similarity: f64,
}

/// The `k` rows of `means` most similar to `means[query]`, excluding the
/// query. Ties go to the smaller id.
pub fn nearest_neighbors(means: &[Vec<f64>], query: usize, k: usize) -> Result<Vec<Neighbor>> {
    let q = means.get(query).ok_or_else(|| {
        Error::invalid("nearest_neighbors", format!("query {query} out of range for {} sentences", means.len()))
    })?;
    Ok(nearest_to(means, q, k, Some(query)))
}

/// The `k` rows of `means` most similar to `vector`.
pub fn nearest_to(means: &[Vec<f64>], vector: &[f64], k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = means
        .iter()
        .enumerate()
        .filter(|(id, _)| Some(*id) != exclude)
        .map(|(id, m)| Neighbor {
            id,
            similarity: cosine_similarity(vector, m),
        })
        .collect();
    all.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then(a.id.cmp(&b.id)));
    all.truncate(k);
    all
}

/// Canonical unlexicalized form of a subtree pattern: whitespace
/// normalized and everything after each node's label dropped unless it is a
/// bracket. `(NT-04 (T-13 w) (T-02))` becomes `(NT-04 (T-13) (T-02))`.
pub fn normalize_pattern(pattern: &str) -> Result<String> {
    let mut out = String::new();
    let mut depth = 0usize;
    let mut expect_label = false;
    let mut atom = String::new();
    let flush = |atom: &mut String, out: &mut String, expect_label: &mut bool| {
        if !atom.is_empty() {
            if *expect_label {
                out.push_str(atom);
                *expect_label = false;
            }
            atom.clear();
        }
    };
    for ch in pattern.chars() {
        match ch {
            '(' => {
                flush(&mut atom, &mut out, &mut expect_label);
                if expect_label {
                    return Err(Error::invalid("subtree pattern", "node without a label"));
                }
                if depth > 0 {
                    out.push(' ');
                }
                out.push('(');
                depth += 1;
                expect_label = true;
            }
            ')' => {
                flush(&mut atom, &mut out, &mut expect_label);
                if expect_label || depth == 0 {
                    return Err(Error::invalid("subtree pattern", "unbalanced or empty bracket"));
                }
                out.push(')');
                depth -= 1;
            }
            c if c.is_whitespace() => flush(&mut atom, &mut out, &mut expect_label),
            c => {
                if depth == 0 {
                    return Err(Error::invalid("subtree pattern", "text outside brackets"));
                }
                atom.push(c);
            }
        }
    }
    if depth != 0 || out.is_empty() {
        return Err(Error::invalid("subtree pattern", "unbalanced brackets"));
    }
    Ok(out)
}

/// A subtree occurrence: sentence index and node index in its tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubtreeMatch {
    pub sentence: usize,
    pub node: usize,
    pub start: usize,
    pub end: usize,
}

/// Every nonterminal node whose unlexicalized subtree equals `pattern`.
pub fn match_subtrees(trees: &[Tree], pattern: &str) -> Result<Vec<SubtreeMatch>> {
    let pattern = normalize_pattern(pattern)?;
    let mut out = Vec::new();
    for (sentence, tree) in trees.iter().enumerate() {
        for (node, n) in tree.nodes().iter().enumerate() {
            if n.children.is_some() && tree.subtree_shape(node) == pattern {
                out.push(SubtreeMatch {
                    sentence,
                    node,
                    start: n.start,
                    end: n.end,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::TreeNode;
    use crate::grammar::Symbol;

    #[test]
    fn cosine_conventions() {
        let a = [1.0, 2.0, -0.5];
        let b = [0.3, -1.0, 2.0];
        assert_eq!(cosine_similarity(&a, &b), cosine_similarity(&b, &a));
        assert!((cosine_similarity(&a, &a) - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&a, &[0.0; 3]), 0.0);
        assert_eq!(cosine_similarity(&[0.0; 3], &[0.0; 3]), 0.0);
    }

    #[test]
    fn neighbors_rank_and_tie_break() {
        let means = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]];
        let n = nearest_neighbors(&means, 0, 3).unwrap();
        assert_eq!(n.iter().map(|x| x.id).collect::<Vec<_>>(), vec![2, 3, 1]);
        assert_eq!(n[0].similarity, 1.0);
        assert!(nearest_neighbors(&means, 9, 1).is_err());
    }

    #[test]
    fn pattern_normalization() {
        assert_eq!(
            normalize_pattern(" (NT-04  (T-13 ·)\n (NT-12 (T-01) (T-02 x)))").unwrap(),
            "(NT-04 (T-13) (NT-12 (T-01) (T-02)))"
        );
        assert!(normalize_pattern("(NT-01").is_err());
        assert!(normalize_pattern("()").is_err());
        assert!(normalize_pattern("x").is_err());
    }

    #[test]
    fn subtree_matching() {
        let leaf = |i: usize, t: usize| TreeNode {
            start: i,
            end: i,
            symbol: Symbol::Preterminal(t),
            children: None,
        };
        let node = |s: usize, e: usize, a: usize, l: usize, r: usize| TreeNode {
            start: s,
            end: e,
            symbol: Symbol::Nonterminal(a),
            children: Some((l, r)),
        };
        // (NT-01 (T-01) (NT-02 (T-02) (T-01)))
        let tree = Tree::from_nodes(vec![node(0, 2, 0, 1, 2), leaf(0, 0), node(1, 2, 1, 3, 4), leaf(1, 1), leaf(2, 0)]);
        let m = match_subtrees(&[tree.clone(), tree], "(NT-02 (T-02 a) (T-01 b))").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!((m[1].sentence, m[1].node, m[1].start, m[1].end), (1, 2, 1, 2));
    }
}
