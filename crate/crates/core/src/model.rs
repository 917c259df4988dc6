//! A complete model: grammar, optional inference network, parameters and
//! vocabulary, with conversion to and from checkpoints.

use std::path::Path;

use crate::chart::{inside, map_parse_compound, viterbi_parse, Sentence, ViterbiParse};
use crate::corpus::Vocab;
use crate::diffmath::{seeded_rng, ParamStore};
use crate::error::{Error, Result};
use crate::grammar::checkpoint::RawCheckpoint;
use crate::grammar::{GrammarModel, GrammarSpec, ModelKind, RuleLogProbs};
use crate::posterior::{encode, Encoder, EncoderSpec, GaussianPosterior};

/// Everything needed to build a fresh model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub kind: ModelKind,
    pub num_nonterminals: usize,
    pub num_preterminals: usize,
    pub symbol_dim: usize,
    /// Ignored unless the model is compound.
    pub z_dim: usize,
    /// Hidden width of each encoder LSTM direction.
    pub encoder_hidden: usize,
}

impl Architecture {
    pub fn grammar_spec(&self, vocab_size: usize) -> GrammarSpec {
        let z = if self.kind == ModelKind::Compound { self.z_dim } else { 0 };
        GrammarSpec::new(self.num_nonterminals, self.num_preterminals, vocab_size)
            .with_symbol_dim(self.symbol_dim)
            .with_z_dim(z)
    }

    fn encoder_spec(&self, vocab_size: usize) -> Option<EncoderSpec> {
        (self.kind == ModelKind::Compound).then_some(EncoderSpec {
            vocab_size,
            embed_dim: self.symbol_dim,
            hidden_dim: self.encoder_hidden,
            z_dim: self.z_dim,
        })
    }
}

pub struct Model {
    arch: Architecture,
    grammar: GrammarModel,
    encoder: Option<Encoder>,
    params: ParamStore,
    vocab: Vocab,
    seed: u64,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("arch", &self.arch)
            .field("vocab_size", &self.vocab.len())
            .field("num_params", &self.params.num_scalars())
            .field("seed", &self.seed)
            .finish()
    }
}

impl Model {
    /// Initializes parameters from `seed`: grammar first, then the encoder.
    pub fn new(arch: Architecture, vocab: Vocab, seed: u64) -> Result<Self> {
        let mut rng = seeded_rng(seed);
        let mut params = ParamStore::new();
        let grammar = GrammarModel::register(arch.grammar_spec(vocab.len()), arch.kind, &mut params, &mut rng)?;
        let encoder = match arch.encoder_spec(vocab.len()) {
            Some(spec) => Some(Encoder::register(spec, &mut params, &mut rng)?),
            None => None,
        };
        Ok(Model {
            arch,
            grammar,
            encoder,
            params,
            vocab,
            seed,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.arch.kind
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn spec(&self) -> &GrammarSpec {
        self.grammar.spec()
    }

    pub fn grammar(&self) -> &GrammarModel {
        &self.grammar
    }

    pub fn encoder(&self) -> Option<&Encoder> {
        self.encoder.as_ref()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn require_encoder(&self) -> Result<&Encoder> {
        self.encoder
            .as_ref()
            .ok_or_else(|| Error::ModelKind(format!("{} model has no posterior", self.kind())))
    }

    /// `q(z | x)`; compound models only.
    pub fn posterior(&self, sentence: &Sentence) -> Result<GaussianPosterior> {
        encode(self.require_encoder()?, &self.params, sentence)
    }

    /// Rule tables; `z` is required exactly for compound models.
    pub fn rule_logprobs(&self, z: Option<&[f64]>) -> Result<RuleLogProbs> {
        self.grammar.rule_logprobs(&self.params, z)
    }

    /// Exact `log p(x)` for scalar and neural models.
    pub fn log_likelihood(&self, sentence: &Sentence) -> Result<f64> {
        if self.kind() == ModelKind::Compound {
            return Err(Error::ModelKind("log p(x) is intractable for a compound model".into()));
        }
        inside(sentence, &self.rule_logprobs(None)?)
    }

    /// Viterbi tree; compound models parse at the posterior mean.
    pub fn parse(&self, sentence: &Sentence) -> Result<ViterbiParse> {
        sentence.validate(self.vocab.len())?;
        match self.kind() {
            ModelKind::Compound => {
                let q = self.posterior(sentence)?;
                map_parse_compound(sentence, &self.grammar, &self.params, &q.mean)
            }
            _ => viterbi_parse(sentence, &self.rule_logprobs(None)?),
        }
    }

    pub fn to_checkpoint(&self) -> RawCheckpoint {
        let a = &self.arch;
        let metadata = [
            ("kind", a.kind.to_string()),
            ("num_nonterminals", a.num_nonterminals.to_string()),
            ("num_preterminals", a.num_preterminals.to_string()),
            ("symbol_dim", a.symbol_dim.to_string()),
            ("z_dim", a.z_dim.to_string()),
            ("encoder_hidden", a.encoder_hidden.to_string()),
            ("vocab_size", self.vocab.len().to_string()),
            ("vocab", self.vocab.tokens().join(" ")),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        RawCheckpoint {
            metadata,
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(raw: RawCheckpoint) -> Result<Self> {
        let arch = Architecture {
            kind: raw.meta_parse("kind")?,
            num_nonterminals: raw.meta_parse("num_nonterminals")?,
            num_preterminals: raw.meta_parse("num_preterminals")?,
            symbol_dim: raw.meta_parse("symbol_dim")?,
            z_dim: raw.meta_parse("z_dim")?,
            encoder_hidden: raw.meta_parse("encoder_hidden")?,
        };
        let vocab = Vocab::from_tokens(raw.meta("vocab")?.split(' ').map(str::to_string).collect())?;
        let vocab_size: usize = raw.meta_parse("vocab_size")?;
        if vocab_size != vocab.len() {
            return Err(Error::Checkpoint(format!(
                "vocab_size {vocab_size} disagrees with {} stored tokens",
                vocab.len()
            )));
        }
        let seed = raw.meta_parse("seed")?;
        let grammar = GrammarModel::attach(arch.grammar_spec(vocab.len()), arch.kind, &raw.params)?;
        let encoder = match arch.encoder_spec(vocab.len()) {
            Some(spec) => Some(Encoder::attach(spec, &raw.params)?),
            None => None,
        };
        raw.params.check_finite()?;
        Ok(Model {
            arch,
            grammar,
            encoder,
            params: raw.params,
            vocab,
            seed,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.to_checkpoint().to_bytes()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Model::from_checkpoint(RawCheckpoint::load(path)?)
    }
}
