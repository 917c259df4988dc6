//! Charts over a sentence: the inside algorithm for marginal likelihoods,
//! Viterbi decoding, and brute-force enumeration for checking both.

pub mod brute;
mod inside;
mod tree;
mod viterbi;

pub use brute::{brute_force_best, brute_force_logprob, enumerate_shapes, for_each_derivation, Derivation, Rule};
pub use inside::{inside, inside_logprob, inside_with_chart, Chart};
pub use tree::{escape_token, Sentence, Tree, TreeNode};
pub use viterbi::{map_parse_compound, viterbi_parse, ViterbiParse};

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use rand::Rng;

    use super::*;
    use crate::diffmath::{log_softmax_into, seeded_rng, Tape};
    use crate::grammar::{RuleLogProbs, RuleVars, Symbol};

    fn random_rules(rng: &mut impl Rng, n: usize, p: usize, v: usize, spread: f64) -> RuleLogProbs {
        let s = n + p;
        let mut row = |len: usize| {
            let raw: Vec<f64> = (0..len).map(|_| rng.random_range(-spread..spread)).collect();
            let mut out = vec![0.0; len];
            log_softmax_into(&raw, &mut out);
            out
        };
        let root = row(n);
        let binary = (0..n).flat_map(|_| row(s * s)).collect();
        let terminal = (0..p).flat_map(|_| row(v)).collect();
        RuleLogProbs::new(n, p, v, root, binary, terminal).unwrap()
    }

    fn random_sentence(rng: &mut impl Rng, len: usize, v: usize) -> Sentence {
        Sentence::new((0..len).map(|_| rng.random_range(0..v)).collect())
    }

    /// π(S→A)=1, π(A→T1 T2)=1, π(T1→w1)=1, π(T2→w2)=1, everything else 0.
    fn deterministic_grammar() -> RuleLogProbs {
        let ninf = f64::NEG_INFINITY;
        // N = {A}, P = {T1, T2}; child indices: A=0, T1=1, T2=2.
        let mut binary = vec![ninf; 9];
        binary[1 * 3 + 2] = 0.0;
        let terminal = vec![0.0, ninf, ninf, 0.0];
        RuleLogProbs::new(1, 2, 2, vec![0.0], binary, terminal).unwrap()
    }

    #[test]
    fn deterministic_grammar_has_probability_one() {
        let rules = deterministic_grammar();
        let s = Sentence::new(vec![0, 1]);
        assert_eq!(inside(&s, &rules).unwrap(), 0.0);
        let parse = viterbi_parse(&s, &rules).unwrap();
        assert_eq!(parse.score, 0.0);
        assert_eq!(parse.tree.to_bracketed(&["w1", "w2"]), "(NT-01 (T-01 w1) (T-02 w2))");
        // The reversed string is impossible.
        assert_eq!(inside(&Sentence::new(vec![1, 0]), &rules).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn errors_surface() {
        let rules = deterministic_grammar();
        assert!(matches!(
            inside(&Sentence::new(vec![0]), &rules),
            Err(crate::Error::SentenceTooShort(1))
        ));
        let mut bad = rules.binary_table().to_vec();
        bad[0] = f64::NAN;
        let bad = RuleLogProbs::new(1, 2, 2, vec![0.0], bad, rules.terminal_table().to_vec()).unwrap();
        assert!(matches!(
            inside(&Sentence::new(vec![0, 1]), &bad),
            Err(crate::Error::NonFinite { .. })
        ));
    }

    #[test]
    fn inside_matches_enumeration() {
        let mut rng = seeded_rng(11);
        for _ in 0..60 {
            let (n, p, v) = (rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=5));
            let len = rng.random_range(2..=5);
            let rules = random_rules(&mut rng, n, p, v, 3.0);
            let s = random_sentence(&mut rng, len, v);
            let fast = inside(&s, &rules).unwrap();
            let slow = brute_force_logprob(&s, &rules).unwrap();
            assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
            let best = viterbi_parse(&s, &rules).unwrap();
            assert!(fast >= best.score);
            assert_eq!(best.score, best.tree.log_prob(&s, &rules));
            let (max, _) = brute_force_best(&s, &rules).unwrap();
            assert_eq!(best.score, max);
        }
    }

    #[test]
    fn gradient_equals_expected_rule_counts() {
        let mut rng = seeded_rng(12);
        for _ in 0..10 {
            let (n, p, v) = (2, 2, 3);
            let rules = random_rules(&mut rng, n, p, v, 2.0);
            let s = random_sentence(&mut rng, 4, v);
            let mut tape = Tape::new();
            let vars = RuleVars::from_logprobs(&mut tape, &rules);
            let lp = inside_logprob(&mut tape, &s, &vars).unwrap();
            let grads = tape.backward(lp).unwrap();

            let log_z = brute_force_logprob(&s, &rules).unwrap();
            let mut counts: HashMap<Rule, f64> = HashMap::new();
            for_each_derivation(&s, &rules, |d, score| {
                let w = (score - log_z).exp();
                for r in d.rules(&s) {
                    *counts.entry(r).or_default() += w;
                }
            })
            .unwrap();
            let ss = (n + p) * (n + p);
            let g_bin = grads.wrt(vars.binary).unwrap().data();
            for a in 0..n {
                for bc in 0..ss {
                    let expected = counts.get(&Rule::Binary(a, bc / (n + p), bc % (n + p))).copied().unwrap_or(0.0);
                    let got = g_bin[a * ss + bc];
                    assert!((got - expected).abs() <= 1e-8 * expected.abs().max(1e-12), "{got} vs {expected}");
                }
            }
            let g_root = grads.wrt(vars.root).unwrap().data();
            for a in 0..n {
                let expected = counts[&Rule::Root(a)];
                assert!((g_root[a] - expected).abs() <= 1e-8 * expected);
            }
        }
    }

    #[test]
    fn viterbi_ties_prefer_smallest_split_then_pair() {
        // One nonterminal, one preterminal, uniform binary rules: every
        // bracketing of three tokens has the same score.
        let rules = RuleLogProbs::new(1, 1, 1, vec![0.0], vec![-(4f64.ln()); 4], vec![0.0]).unwrap();
        let s = Sentence::new(vec![0, 0, 0]);
        let (max, argmaxes) = brute_force_best(&s, &rules).unwrap();
        assert_eq!(argmaxes.len(), 2);
        let parse = viterbi_parse(&s, &rules).unwrap();
        assert_eq!(parse.score, max);
        // Split after the first token: (T (NT T T)).
        assert_eq!(parse.tree.unlexicalized(), "(NT-01 (T-01) (NT-01 (T-01) (T-01)))");
    }

    #[test]
    fn viterbi_tie_on_child_pair() {
        // Two preterminals with identical emissions; the lower-index pair wins.
        let ninf = f64::NEG_INFINITY;
        let mut binary = vec![ninf; 9];
        let half = -(2f64.ln());
        binary[1 * 3 + 2] = half; // A -> T1 T2
        binary[2 * 3 + 1] = half; // A -> T2 T1
        let rules = RuleLogProbs::new(1, 2, 1, vec![0.0], binary, vec![0.0, 0.0]).unwrap();
        let s = Sentence::new(vec![0, 0]);
        let (_, argmaxes) = brute_force_best(&s, &rules).unwrap();
        assert_eq!(argmaxes.len(), 2);
        let parse = viterbi_parse(&s, &rules).unwrap();
        assert_eq!(parse.tree.nodes()[1].symbol, Symbol::Preterminal(0));
        assert_eq!(parse.tree.nodes()[2].symbol, Symbol::Preterminal(1));
    }

    #[test]
    fn string_probabilities_sum_below_one() {
        // |Σ| = 1 so there is exactly one string per length.
        let mut rng = seeded_rng(13);
        let rules = random_rules(&mut rng, 2, 2, 1, 1.0);
        let total: f64 = (2..=9)
            .map(|len| inside(&Sentence::new(vec![0; len]), &rules).unwrap().exp())
            .sum();
        assert!(total <= 1.0 + 1e-12, "{total}");
        assert!(total > 0.0);
    }

    #[test]
    fn cubic_runtime_envelope() {
        let mut rng = seeded_rng(14);
        let rules = random_rules(&mut rng, 10, 10, 20, 1.0);
        let time = |len: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let s = random_sentence(rng, len, 20);
            let start = std::time::Instant::now();
            for _ in 0..5 {
                inside(&s, &rules).unwrap();
            }
            start.elapsed().as_secs_f64()
        };
        time(20, &mut rng);
        let short = time(20, &mut rng);
        let long = time(40, &mut rng);
        assert!(long <= 10.0 * short.max(1e-4), "{short} -> {long}");
    }

    #[test]
    fn inside_is_stable_for_long_sentences() {
        let mut rng = seeded_rng(15);
        let rules = random_rules(&mut rng, 5, 5, 50, 2.0);
        let s = random_sentence(&mut rng, 60, 50);
        let lp = inside(&s, &rules).unwrap();
        assert!(lp.is_finite() && lp < -100.0);
    }
}
