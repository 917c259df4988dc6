use super::GrammarSpec;
use crate::diffmath::{logsumexp, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Log-probability tables for the three rule shapes.
///
/// `root` has `|N|` entries, `binary` is `|N| × (|N|+|P|)²` row-major and
/// `terminal` is `|P| × |Σ|` row-major. A log-probability of `-inf` marks an
/// impossible rule; NaN and `+inf` are never valid.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleLogProbs {
    num_nonterminals: usize,
    num_preterminals: usize,
    vocab_size: usize,
    root: Vec<f64>,
    binary: Vec<f64>,
    terminal: Vec<f64>,
}

impl RuleLogProbs {
    pub fn new(
        num_nonterminals: usize,
        num_preterminals: usize,
        vocab_size: usize,
        root: Vec<f64>,
        binary: Vec<f64>,
        terminal: Vec<f64>,
    ) -> Result<Self> {
        let s = num_nonterminals + num_preterminals;
        if root.len() != num_nonterminals {
            return Err(Error::shape("RuleLogProbs::root", &[root.len()], &[num_nonterminals]));
        }
        if binary.len() != num_nonterminals * s * s {
            return Err(Error::shape(
                "RuleLogProbs::binary",
                &[binary.len()],
                &[num_nonterminals, s * s],
            ));
        }
        if terminal.len() != num_preterminals * vocab_size {
            return Err(Error::shape(
                "RuleLogProbs::terminal",
                &[terminal.len()],
                &[num_preterminals, vocab_size],
            ));
        }
        Ok(RuleLogProbs {
            num_nonterminals,
            num_preterminals,
            vocab_size,
            root,
            binary,
            terminal,
        })
    }

    pub fn num_nonterminals(&self) -> usize {
        self.num_nonterminals
    }

    pub fn num_preterminals(&self) -> usize {
        self.num_preterminals
    }

    pub fn num_symbols(&self) -> usize {
        self.num_nonterminals + self.num_preterminals
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn root_table(&self) -> &[f64] {
        &self.root
    }

    pub fn binary_table(&self) -> &[f64] {
        &self.binary
    }

    pub fn terminal_table(&self) -> &[f64] {
        &self.terminal
    }

    pub fn root(&self, a: usize) -> f64 {
        self.root[a]
    }

    /// `log π(A -> B C)` with `B`, `C` in the shared child index space.
    pub fn binary(&self, a: usize, b: usize, c: usize) -> f64 {
        let s = self.num_symbols();
        self.binary[a * s * s + b * s + c]
    }

    pub fn binary_row(&self, a: usize) -> &[f64] {
        let ss = self.num_symbols() * self.num_symbols();
        &self.binary[a * ss..(a + 1) * ss]
    }

    pub fn terminal(&self, t: usize, w: usize) -> f64 {
        self.terminal[t * self.vocab_size + w]
    }

    /// Rejects NaN and `+inf` entries; `-inf` (probability zero) is allowed.
    pub fn check_valid(&self) -> Result<()> {
        for (what, table) in [
            ("root rule table", &self.root),
            ("binary rule table", &self.binary),
            ("terminal rule table", &self.terminal),
        ] {
            if let Some(index) = table.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(Error::NonFinite { what, index });
            }
        }
        Ok(())
    }

    /// Largest `|logsumexp(row)|` over every row of every table.
    pub fn max_normalization_error(&self) -> f64 {
        let s2 = self.num_symbols() * self.num_symbols();
        let mut worst = logsumexp(&self.root).abs();
        for row in self.binary.chunks(s2).chain(self.terminal.chunks(self.vocab_size)) {
            worst = worst.max(logsumexp(row).abs());
        }
        worst
    }

    pub fn all_finite(&self) -> bool {
        self.root
            .iter()
            .chain(&self.binary)
            .chain(&self.terminal)
            .all(|v| v.is_finite())
    }
}

/// Rule tables living on a tape, so that chart scores can be differentiated
/// back into whatever produced them.
#[derive(Debug, Clone, Copy)]
pub struct RuleVars {
    pub root: Var,
    pub binary: Var,
    pub terminal: Var,
    pub num_nonterminals: usize,
    pub num_preterminals: usize,
    pub vocab_size: usize,
}

impl RuleVars {
    /// Records fixed tables as tape leaves.
    pub fn from_logprobs(tape: &mut Tape, rules: &RuleLogProbs) -> Self {
        let n = rules.num_nonterminals;
        let s = rules.num_symbols();
        let root = tape.leaf(Tensor::vector(rules.root.clone()));
        let binary = tape.leaf(Tensor::matrix(n, s * s, rules.binary.clone()).expect("checked at construction"));
        let terminal = tape.leaf(
            Tensor::matrix(rules.num_preterminals, rules.vocab_size, rules.terminal.clone())
                .expect("checked at construction"),
        );
        RuleVars {
            root,
            binary,
            terminal,
            num_nonterminals: n,
            num_preterminals: rules.num_preterminals,
            vocab_size: rules.vocab_size,
        }
    }

    pub fn values(&self, tape: &Tape) -> RuleLogProbs {
        RuleLogProbs::new(
            self.num_nonterminals,
            self.num_preterminals,
            self.vocab_size,
            tape.value(self.root).data().to_vec(),
            tape.value(self.binary).data().to_vec(),
            tape.value(self.terminal).data().to_vec(),
        )
        .expect("tape tables have rule-table shapes")
    }

    pub fn spec_matches(&self, spec: &GrammarSpec) -> bool {
        self.num_nonterminals == spec.num_nonterminals
            && self.num_preterminals == spec.num_preterminals
            && self.vocab_size == spec.vocab_size
    }
}
