use rand::Rng;

use crate::chart::{inside, Sentence};
use crate::diffmath::logsumexp;
use crate::error::{Error, Result};
use crate::grammar::{ModelKind, RuleLogProbs};
use crate::model::Model;
use crate::posterior::{sample, standard_noise, standard_normal_log_density};

/// Corpus-level perplexity with the total log-likelihood it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerplexityEstimate {
    pub perplexity: f64,
    pub log_likelihood: f64,
    pub tokens: usize,
}

/// Importance-weighted estimate of `log p(x)` for a compound model:
/// `logsumexp_k [log p(x|z_k) + log p(z_k) − log q(z_k|x)] − log K` with
/// `z_k ~ q(z|x)`. Exact for scalar and neural models.
pub fn iw_log_likelihood(model: &Model, sentence: &Sentence, num_samples: usize, rng: &mut impl Rng) -> Result<f64> {
    if num_samples < 1 {
        return Err(Error::invalid("iw_perplexity", "need at least one sample"));
    }
    if model.kind() != ModelKind::Compound {
        return model.log_likelihood(sentence);
    }
    sentence.validate(model.vocab().len())?;
    let q = model.posterior(sentence)?;
    let mut weights = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        let z = sample(&q, &standard_noise(rng, q.dim()))?;
        let rules = model.rule_logprobs(Some(&z))?;
        weights.push(inside(sentence, &rules)? + standard_normal_log_density(&z) - q.log_density(&z));
    }
    Ok(logsumexp(&weights) - (num_samples as f64).ln())
}

/// `exp(−Σ log p̂(x) / Σ |x|)` over `sentences`.
pub fn iw_perplexity(
    model: &Model,
    sentences: &[Sentence],
    num_samples: usize,
    rng: &mut impl Rng,
) -> Result<PerplexityEstimate> {
    if num_samples < 1 {
        return Err(Error::invalid("iw_perplexity", "need at least one sample"));
    }
    let shared: Option<RuleLogProbs> = match model.kind() {
        ModelKind::Compound => None,
        _ => Some(model.rule_logprobs(None)?),
    };
    let mut total = 0.0;
    let mut tokens = 0;
    for s in sentences {
        total += match &shared {
            Some(rules) => {
                s.validate(model.vocab().len())?;
                inside(s, rules)?
            }
            None => iw_log_likelihood(model, s, num_samples, rng)?,
        };
        tokens += s.len();
    }
    Ok(PerplexityEstimate {
        perplexity: (-total / tokens as f64).exp(),
        log_likelihood: total,
        tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocab;
    use crate::diffmath::seeded_rng;
    use crate::model::Architecture;

    fn model(kind: ModelKind) -> Model {
        let arch = Architecture {
            kind,
            num_nonterminals: 2,
            num_preterminals: 2,
            symbol_dim: 4,
            z_dim: 2,
            encoder_hidden: 3,
        };
        Model::new(arch, Vocab::build(["a", "b", "c"], 10), 11).unwrap()
    }

    #[test]
    fn neural_perplexity_is_exact() {
        let m = model(ModelKind::Neural);
        let sents = vec![Sentence::new(vec![1, 2]), Sentence::new(vec![3, 1, 2])];
        let est = iw_perplexity(&m, &sents, 1, &mut seeded_rng(0)).unwrap();
        let total: f64 = sents.iter().map(|s| m.log_likelihood(s).unwrap()).sum();
        assert_eq!(est.log_likelihood, total);
        assert_eq!(est.perplexity, (-total / 5.0).exp());
        assert!(iw_perplexity(&m, &sents, 0, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn z_independent_grammar_with_prior_posterior_is_exact() {
        // Zero the z columns of the rule output, the z inputs of both MLPs
        // and the encoder head, so p(x|z) is constant and q is the prior.
        let mut m = model(ModelKind::Compound);
        let d = m.spec().symbol_dim;
        let store = m.params_mut();
        for name in ["grammar.rule_out", "grammar.f1.w", "grammar.f2.w"] {
            let id = store.id(name).unwrap();
            let t = store.get_mut(id);
            let cols = t.cols();
            for r in 0..t.rows() {
                t.data_mut()[r * cols + d..(r + 1) * cols].fill(0.0);
            }
        }
        for name in ["encoder.head.w", "encoder.head.b"] {
            let id = store.id(name).unwrap();
            store.get_mut(id).data_mut().fill(0.0);
        }
        let s = Sentence::new(vec![2, 3, 1]);
        let exact = inside(&s, &m.rule_logprobs(Some(&[0.0, 0.0])).unwrap()).unwrap();
        for k in [1, 7] {
            let est = iw_log_likelihood(&m, &s, k, &mut seeded_rng(k as u64)).unwrap();
            assert!((est - exact).abs() < 1e-12, "{est} vs {exact}");
        }
    }
}
