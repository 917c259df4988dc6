use crate::chart::{inside_logprob, Sentence};
use crate::diffmath::{Bound, Tape, Var};
use crate::error::{Error, Result};
use crate::grammar::{GrammarModel, ModelKind, RuleVars};
use crate::model::Model;
use crate::posterior::{kl_var, sample_var, Encoder, PosteriorVars};

/// `log p(x)` of a scalar or neural PCFG, recorded on the tape.
pub fn neural_objective(tape: &mut Tape, grammar: &GrammarModel, bound: &Bound, sentence: &Sentence) -> Result<Var> {
    if grammar.kind() == ModelKind::Compound {
        return Err(Error::ModelKind("neural objective needs a scalar or neural model".into()));
    }
    let rules = grammar.rule_vars(tape, bound, None)?;
    inside_logprob(tape, sentence, &rules)
}

/// Terms of the single-sample evidence lower bound.
#[derive(Debug, Clone, Copy)]
pub struct ElboTerms {
    pub elbo: Var,
    /// `log p(x | z)` at the sampled `z`.
    pub reconstruction: Var,
    pub kl: Var,
    pub posterior: PosteriorVars,
}

/// `log p(x | z) − KL[q(z | x) || N(0, I)]` with `z = μ + σ ⊙ noise`.
pub fn elbo(
    tape: &mut Tape,
    grammar: &GrammarModel,
    encoder: &Encoder,
    bound: &Bound,
    sentence: &Sentence,
    noise: &[f64],
) -> Result<ElboTerms> {
    let posterior = encoder.encode_vars(tape, bound, sentence)?;
    elbo_from_posterior(tape, grammar, bound, sentence, posterior, noise)
}

/// As [`elbo`] but with posterior parameters already on the tape.
pub fn elbo_from_posterior(
    tape: &mut Tape,
    grammar: &GrammarModel,
    bound: &Bound,
    sentence: &Sentence,
    posterior: PosteriorVars,
    noise: &[f64],
) -> Result<ElboTerms> {
    let z = sample_var(tape, &posterior, noise)?;
    let rules = grammar.rule_vars(tape, bound, Some(z))?;
    let reconstruction = inside_logprob(tape, sentence, &rules)?;
    let kl = kl_var(tape, &posterior)?;
    let elbo = tape.sub(reconstruction, kl)?;
    Ok(ElboTerms {
        elbo,
        reconstruction,
        kl,
        posterior,
    })
}

/// Per-sentence objectives (log-likelihood or ELBO) for a batch. Neural and
/// scalar models share one set of rule variables across the batch.
/// `noise` yields one standard-normal vector per sentence for compound
/// models and is not called otherwise.
pub fn batch_objectives(
    tape: &mut Tape,
    model: &Model,
    bound: &Bound,
    sentences: &[&Sentence],
    noise: &mut dyn FnMut() -> Vec<f64>,
) -> Result<Vec<Var>> {
    let grammar = model.grammar();
    match model.encoder() {
        Some(encoder) => sentences
            .iter()
            .map(|s| Ok(elbo(tape, grammar, encoder, bound, s, &noise())?.elbo))
            .collect(),
        None => {
            let rules: RuleVars = grammar.rule_vars(tape, bound, None)?;
            sentences.iter().map(|s| inside_logprob(tape, s, &rules)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::inside;
    use crate::corpus::Vocab;
    use crate::diffmath::Tensor;
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
        Model::new(arch, Vocab::build(["a", "b", "c"], 10), 5).unwrap()
    }

    #[test]
    fn neural_objective_is_inside() {
        let m = model(ModelKind::Neural);
        let s = Sentence::new(vec![1, 2, 3]);
        let mut tape = Tape::new();
        let bound = m.params().bind(&mut tape);
        let lp = neural_objective(&mut tape, m.grammar(), &bound, &s).unwrap();
        assert_eq!(tape.value(lp).item(), inside(&s, &m.rule_logprobs(None).unwrap()).unwrap());
    }

    #[test]
    fn zero_kl_elbo_is_conditional_likelihood() {
        let mut m = model(ModelKind::Compound);
        let (w, b) = m.encoder().unwrap().head_ids();
        m.params_mut().get_mut(w).data_mut().fill(0.0);
        m.params_mut().get_mut(b).data_mut().fill(0.0);
        let s = Sentence::new(vec![3, 1]);
        let eps = [0.7, -1.1];
        let mut tape = Tape::new();
        let bound = m.params().bind(&mut tape);
        let terms = elbo(&mut tape, m.grammar(), m.encoder().unwrap(), &bound, &s, &eps).unwrap();
        assert_eq!(tape.value(terms.kl).item(), 0.0);
        let direct = inside(&s, &m.rule_logprobs(Some(&eps)).unwrap()).unwrap();
        assert_eq!(tape.value(terms.elbo).item(), direct);
    }

    #[test]
    fn objective_kind_checks() {
        let m = model(ModelKind::Compound);
        let mut tape = Tape::new();
        let bound = m.params().bind(&mut tape);
        assert!(neural_objective(&mut tape, m.grammar(), &bound, &Sentence::new(vec![1, 2])).is_err());
        let mut t2 = Tape::new();
        let mean = t2.leaf(Tensor::vector(vec![0.0; 3]));
        let lv = t2.leaf(Tensor::vector(vec![0.0; 3]));
        let bound = m.params().bind(&mut t2);
        let post = PosteriorVars { mean, log_variance: lv };
        // z_dim mismatch between posterior and grammar.
        assert!(elbo_from_posterior(&mut t2, m.grammar(), &bound, &Sentence::new(vec![1, 2]), post, &[0.0; 3]).is_err());
    }
}
