use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grammar::ModelKind;
use crate::model::Architecture;

/// Training hyperparameters. Serialized as flat `key=value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub grad_clip_norm: f64,
    pub curriculum_start_len: usize,
    pub curriculum_increment: usize,
    pub num_nonterminals: usize,
    pub num_preterminals: usize,
    pub symbol_dim: usize,
    pub z_dim: usize,
    pub encoder_hidden: usize,
    pub vocab_cap: usize,
    pub seed: u64,
    /// Where the best checkpoint is written after each improving epoch.
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Compound,
            epochs: 10,
            batch_size: 4,
            learning_rate: 0.001,
            adam_beta1: 0.75,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip_norm: 3.0,
            curriculum_start_len: 30,
            curriculum_increment: 1,
            num_nonterminals: 30,
            num_preterminals: 60,
            symbol_dim: 256,
            z_dim: 64,
            encoder_hidden: 512,
            vocab_cap: 10_000,
            seed: 1,
            checkpoint: None,
        }
    }
}

const KEYS: &[&str] = &[
    "model",
    "epochs",
    "batch_size",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "grad_clip_norm",
    "curriculum_start_len",
    "curriculum_increment",
    "num_nonterminals",
    "num_preterminals",
    "symbol_dim",
    "z_dim",
    "encoder_hidden",
    "vocab_cap",
    "seed",
    "checkpoint",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: invalid value {value:?}")))
}

impl TrainConfig {
    /// Longest sentence trained on in the 1-based `epoch`.
    pub fn curriculum_max_len(&self, epoch: usize) -> usize {
        self.curriculum_start_len + epoch.saturating_sub(1) * self.curriculum_increment
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            kind: self.model,
            num_nonterminals: self.num_nonterminals,
            num_preterminals: self.num_preterminals,
            symbol_dim: self.symbol_dim,
            z_dim: self.z_dim,
            encoder_hidden: self.encoder_hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("adam_eps", self.adam_eps),
            ("grad_clip_norm", self.grad_clip_norm),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be positive, got {v}")));
            }
        }
        for (k, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{k} must lie in [0, 1), got {v}")));
            }
        }
        let counts = [
            ("batch_size", self.batch_size),
            ("num_nonterminals", self.num_nonterminals),
            ("num_preterminals", self.num_preterminals),
            ("symbol_dim", self.symbol_dim),
            ("vocab_cap", self.vocab_cap),
        ];
        for (k, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be at least 1")));
            }
        }
        if self.curriculum_start_len < 2 {
            return Err(Error::Config("curriculum_start_len must be at least 2".into()));
        }
        if self.model == ModelKind::Compound && (self.z_dim == 0 || self.encoder_hidden == 0) {
            return Err(Error::Config("compound model needs z_dim and encoder_hidden > 0".into()));
        }
        Ok(())
    }

    /// Every key in a fixed order, one `key=value` per line.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = match *key {
                "model" => self.model.to_string(),
                "epochs" => self.epochs.to_string(),
                "batch_size" => self.batch_size.to_string(),
                "learning_rate" => self.learning_rate.to_string(),
                "adam_beta1" => self.adam_beta1.to_string(),
                "adam_beta2" => self.adam_beta2.to_string(),
                "adam_eps" => self.adam_eps.to_string(),
                "grad_clip_norm" => self.grad_clip_norm.to_string(),
                "curriculum_start_len" => self.curriculum_start_len.to_string(),
                "curriculum_increment" => self.curriculum_increment.to_string(),
                "num_nonterminals" => self.num_nonterminals.to_string(),
                "num_preterminals" => self.num_preterminals.to_string(),
                "symbol_dim" => self.symbol_dim.to_string(),
                "z_dim" => self.z_dim.to_string(),
                "encoder_hidden" => self.encoder_hidden.to_string(),
                "vocab_cap" => self.vocab_cap.to_string(),
                "seed" => self.seed.to_string(),
                "checkpoint" => self.checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                _ => unreachable!(),
            };
            let _ = writeln!(out, "{key}={value}");
        }
        out
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model" => self.model = value.parse()?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "adam_beta1" => self.adam_beta1 = parse(key, value)?,
            "adam_beta2" => self.adam_beta2 = parse(key, value)?,
            "adam_eps" => self.adam_eps = parse(key, value)?,
            "grad_clip_norm" => self.grad_clip_norm = parse(key, value)?,
            "curriculum_start_len" => self.curriculum_start_len = parse(key, value)?,
            "curriculum_increment" => self.curriculum_increment = parse(key, value)?,
            "num_nonterminals" => self.num_nonterminals = parse(key, value)?,
            "num_preterminals" => self.num_preterminals = parse(key, value)?,
            "symbol_dim" => self.symbol_dim = parse(key, value)?,
            "z_dim" => self.z_dim = parse(key, value)?,
            "encoder_hidden" => self.encoder_hidden = parse(key, value)?,
            "vocab_cap" => self.vocab_cap = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "checkpoint" => self.checkpoint = (!value.is_empty()).then(|| PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines over the defaults. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut config = TrainConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key=value", n + 1)));
            };
            config
                .set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        config.validate()?;
        Ok(config)
    }
}
