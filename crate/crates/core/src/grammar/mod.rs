//! Symbol inventory and rule probabilities.
//!
//! A grammar has a start symbol `S`, `|N|` nonterminals, `|P|` preterminals
//! and a vocabulary `Σ`. Rules come in three shapes:
//!
//! * `S -> A` for `A ∈ N`,
//! * `A -> B C` for `A ∈ N` and `B, C ∈ N ∪ P`,
//! * `T -> w` for `T ∈ P` and `w ∈ Σ`.
//!
//! Child symbols of binary rules share one index space: nonterminals occupy
//! `0..|N|` and preterminals `|N|..|N|+|P|`. The pair `(B, C)` is stored at
//! column `B * (|N|+|P|) + C` of the binary table.

pub mod checkpoint;
mod mlp;
mod params;
mod rules;

use std::fmt;
use std::str::FromStr;

pub use mlp::{residual_mlp_forward, ResidualMlp};
pub use params::{compound_rule_logprobs, neural_rule_logprobs, scalar_rule_logprobs, GrammarModel};
pub use rules::{RuleLogProbs, RuleVars};

use crate::error::{Error, Result};

/// Which parameterization produces the rule probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// One free logit per rule.
    Scalar,
    /// Rule scores from symbol embeddings and residual MLPs.
    Neural,
    /// Neural scores additionally conditioned on a per-sentence latent vector.
    Compound,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Scalar => "scalar",
            ModelKind::Neural => "neural",
            ModelKind::Compound => "compound",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scalar" => Ok(ModelKind::Scalar),
            "neural" => Ok(ModelKind::Neural),
            "compound" => Ok(ModelKind::Compound),
            other => Err(Error::Config(format!(
                "unknown model kind `{other}` (expected scalar, neural or compound)"
            ))),
        }
    }
}

/// Sizes of the symbol inventory and of the embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GrammarSpec {
    pub num_nonterminals: usize,
    pub num_preterminals: usize,
    pub vocab_size: usize,
    pub symbol_dim: usize,
    /// Width of the latent vector; 0 for non-compound models.
    pub z_dim: usize,
}

impl GrammarSpec {
    pub fn new(num_nonterminals: usize, num_preterminals: usize, vocab_size: usize) -> Self {
        GrammarSpec {
            num_nonterminals,
            num_preterminals,
            vocab_size,
            symbol_dim: 256,
            z_dim: 0,
        }
    }

    pub fn with_symbol_dim(mut self, symbol_dim: usize) -> Self {
        self.symbol_dim = symbol_dim;
        self
    }

    pub fn with_z_dim(mut self, z_dim: usize) -> Self {
        self.z_dim = z_dim;
        self
    }

    /// `|N| + |P|`.
    pub fn num_symbols(&self) -> usize {
        self.num_nonterminals + self.num_preterminals
    }

    /// Size of the child-pair space `(N ∪ P) × (N ∪ P)`.
    pub fn num_child_pairs(&self) -> usize {
        self.num_symbols() * self.num_symbols()
    }

    pub fn validate(&self) -> Result<()> {
        let check = |v: usize, what: &str| {
            if v == 0 {
                Err(Error::Config(format!("{what} must be at least 1")))
            } else {
                Ok(())
            }
        };
        check(self.num_nonterminals, "num_nonterminals")?;
        check(self.num_preterminals, "num_preterminals")?;
        check(self.vocab_size, "vocab_size")?;
        check(self.symbol_dim, "symbol_dim")
    }
}

/// A grammar symbol as it appears in a parse tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Nonterminal(usize),
    Preterminal(usize),
}

impl Symbol {
    /// Index in the shared child space (`0..|N|+|P|`).
    pub fn child_index(self, num_nonterminals: usize) -> usize {
        match self {
            Symbol::Nonterminal(a) => a,
            Symbol::Preterminal(t) => num_nonterminals + t,
        }
    }

    pub fn from_child_index(index: usize, num_nonterminals: usize) -> Self {
        if index < num_nonterminals {
            Symbol::Nonterminal(index)
        } else {
            Symbol::Preterminal(index - num_nonterminals)
        }
    }

    /// Display name: `NT-01`, `T-07`, ... (1-based, zero padded to two
    /// digits).
    pub fn name(self) -> String {
        match self {
            Symbol::Nonterminal(a) => format!("NT-{:02}", a + 1),
            Symbol::Preterminal(t) => format!("T-{:02}", t + 1),
        }
    }

    /// Inverse of [`Symbol::name`].
    pub fn parse_name(s: &str) -> Option<Self> {
        let (ctor, digits): (fn(usize) -> Symbol, &str) = if let Some(d) = s.strip_prefix("NT-") {
            (Symbol::Nonterminal, d)
        } else if let Some(d) = s.strip_prefix("T-") {
            (Symbol::Preterminal, d)
        } else {
            return None;
        };
        let n: usize = digits.parse().ok()?;
        n.checked_sub(1).map(ctor)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}
