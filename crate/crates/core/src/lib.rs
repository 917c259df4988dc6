//! Compound probabilistic context-free grammars for unsupervised parsing.
//!
//! The crate covers the full pipeline: a small reverse-mode autodiff tape
//! ([`diffmath`]), grammar parameterizations ([`grammar`]), inside and Viterbi
//! charts ([`chart`]), the variational posterior ([`posterior`]), training
//! ([`trainer`]), treebank handling ([`corpus`]), metrics ([`eval`]) and latent
//! space inspection ([`analysis`]). [`model::Model`] ties a grammar, an
//! optional encoder and a vocabulary into one checkpointable unit.
//!
//! ```
//! use cpcfg::chart::{inside, Sentence};
//! use cpcfg::grammar::{scalar_rule_logprobs, GrammarSpec};
//!
//! let spec = GrammarSpec::new(1, 1, 1);
//! let rules = scalar_rule_logprobs(&spec, &[0.0], &[0.0; 4], &[0.0])?;
//! // One nonterminal, one preterminal: every two-word tree is T T under NT.
//! let lp = inside(&Sentence::new(vec![0, 0]), &rules)?;
//! assert!((lp - 0.25f64.ln()).abs() < 1e-12);
//! # Ok::<(), cpcfg::Error>(())
//! ```

pub mod analysis;
pub mod chart;
pub mod corpus;
pub mod diffmath;
mod error;
pub mod eval;
pub mod grammar;
pub mod model;
pub mod posterior;
pub mod trainer;

pub use error::{Error, Result};
