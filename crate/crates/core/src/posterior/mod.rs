//! Amortized variational posterior `q(z | x)`.
//!
//! A bidirectional single-layer LSTM reads the sentence; the concatenated
//! forward/backward hidden states are max-pooled over time and an affine head
//! produces the mean and log-variance of a diagonal Gaussian.

mod means;

use std::f64::consts::PI;

use rand::Rng;

use crate::chart::Sentence;
use crate::diffmath::{xavier_uniform, Bound, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub use means::{read_means, write_means};

/// Log-variance outputs are clamped to this range.
pub const LOG_VARIANCE_CLAMP: f64 = 10.0;

/// Sizes of the inference network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EncoderSpec {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Hidden width of each LSTM direction.
    pub hidden_dim: usize,
    pub z_dim: usize,
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        for (v, what) in [
            (self.vocab_size, "encoder vocab_size"),
            (self.embed_dim, "encoder embed_dim"),
            (self.hidden_dim, "encoder hidden_dim"),
            (self.z_dim, "z_dim"),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{what} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Diagonal Gaussian over the latent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
}

impl GaussianPosterior {
    pub fn standard(z_dim: usize) -> Self {
        GaussianPosterior {
            mean: vec![0.0; z_dim],
            log_variance: vec![0.0; z_dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `log q(z)`.
    pub fn log_density(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(&self.mean)
            .zip(&self.log_variance)
            .map(|((&zi, &m), &lv)| -0.5 * ((2.0 * PI).ln() + lv + (zi - m).powi(2) / lv.exp()))
            .sum()
    }
}

/// `log N(z; 0, I)`.
pub fn standard_normal_log_density(z: &[f64]) -> f64 {
    z.iter().map(|&zi| -0.5 * ((2.0 * PI).ln() + zi * zi)).sum()
}

/// Posterior parameters recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorVars {
    pub mean: Var,
    pub log_variance: Var,
}

impl PosteriorVars {
    pub fn values(&self, tape: &Tape) -> GaussianPosterior {
        GaussianPosterior {
            mean: tape.value(self.mean).data().to_vec(),
            log_variance: tape.value(self.log_variance).data().to_vec(),
        }
    }
}

struct LstmDirection {
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
}

/// Parameter layout of the inference network, stored under `encoder.`.
pub struct Encoder {
    spec: EncoderSpec,
    embedding: ParamId,
    forward: LstmDirection,
    backward: LstmDirection,
    head_w: ParamId,
    head_b: ParamId,
}

fn name(field: &str) -> String {
    format!("encoder.{field}")
}

impl Encoder {
    pub fn register(spec: EncoderSpec, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let (v, e, h, z) = (spec.vocab_size, spec.embed_dim, spec.hidden_dim, spec.z_dim);
        let embedding = store.insert(name("emb"), xavier_uniform(&[v, e], rng)?);
        let mut direction = |dir: &str| -> Result<LstmDirection> {
            Ok(LstmDirection {
                w_ih: store.insert(name(&format!("{dir}.w_ih")), xavier_uniform(&[4 * h, e], rng)?),
                w_hh: store.insert(name(&format!("{dir}.w_hh")), xavier_uniform(&[4 * h, h], rng)?),
                bias: store.insert(name(&format!("{dir}.b")), Tensor::zeros(&[4 * h])),
            })
        };
        let forward = direction("fwd")?;
        let backward = direction("bwd")?;
        let head_w = store.insert(name("head.w"), xavier_uniform(&[2 * z, 2 * h], rng)?);
        let head_b = store.insert(name("head.b"), Tensor::zeros(&[2 * z]));
        Ok(Encoder {
            spec,
            embedding,
            forward,
            backward,
            head_w,
            head_b,
        })
    }

    pub fn attach(spec: EncoderSpec, store: &ParamStore) -> Result<Self> {
        spec.validate()?;
        let (v, e, h, z) = (spec.vocab_size, spec.embed_dim, spec.hidden_dim, spec.z_dim);
        let get = |field: &str, shape: &[usize]| -> Result<ParamId> {
            let id = store.require(&name(field))?;
            if store.get(id).shape() != shape {
                return Err(Error::Checkpoint(format!(
                    "{}: expected shape {shape:?}, found {:?}",
                    name(field),
                    store.get(id).shape()
                )));
            }
            Ok(id)
        };
        let direction = |dir: &str| -> Result<LstmDirection> {
            Ok(LstmDirection {
                w_ih: get(&format!("{dir}.w_ih"), &[4 * h, e])?,
                w_hh: get(&format!("{dir}.w_hh"), &[4 * h, h])?,
                bias: get(&format!("{dir}.b"), &[4 * h])?,
            })
        };
        Ok(Encoder {
            spec,
            embedding: get("emb", &[v, e])?,
            forward: direction("fwd")?,
            backward: direction("bwd")?,
            head_w: get("head.w", &[2 * z, 2 * h])?,
            head_b: get("head.b", &[2 * z])?,
        })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn head_ids(&self) -> (ParamId, ParamId) {
        (self.head_w, self.head_b)
    }

    /// Records `q(z | x)` on the tape.
    pub fn encode_vars(&self, tape: &mut Tape, bound: &Bound, sentence: &Sentence) -> Result<PosteriorVars> {
        let ids = sentence.ids();
        if ids.is_empty() {
            return Err(Error::SentenceTooShort(0));
        }
        let h = self.spec.hidden_dim;
        let z = self.spec.z_dim;
        let x = tape.gather_rows(bound[self.embedding], ids)?;

        let fwd = self.run_direction(tape, bound, &self.forward, x, (0..ids.len()).collect())?;
        let mut bwd = self.run_direction(tape, bound, &self.backward, x, (0..ids.len()).rev().collect())?;
        bwd.reverse();

        let mut states = Vec::with_capacity(ids.len());
        for (f, b) in fwd.into_iter().zip(bwd) {
            states.push(tape.concat_cols(f, b)?);
        }
        let stacked = tape.concat_rows(&states)?;
        let pooled = tape.max_pool_rows(stacked);
        debug_assert_eq!(tape.value(pooled).len(), 2 * h);
        let head = tape.linear(pooled, bound[self.head_w], Some(bound[self.head_b]))?;
        let mean = tape.slice_cols(head, 0, z)?;
        let raw_lv = tape.slice_cols(head, z, 2 * z)?;
        let log_variance = tape.clamp(raw_lv, -LOG_VARIANCE_CLAMP, LOG_VARIANCE_CLAMP);
        Ok(PosteriorVars { mean, log_variance })
    }

    /// Hidden states (`[1, h]` each) in visiting order.
    fn run_direction(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        dir: &LstmDirection,
        x: Var,
        order: Vec<usize>,
    ) -> Result<Vec<Var>> {
        let h = self.spec.hidden_dim;
        let pre = tape.linear(x, bound[dir.w_ih], Some(bound[dir.bias]))?;
        let mut hidden = tape.constant(Tensor::zeros(&[1, h]));
        let mut cell = tape.constant(Tensor::zeros(&[1, h]));
        let mut out = Vec::with_capacity(order.len());
        for t in order {
            let input = tape.gather_rows(pre, &[t])?;
            let rec = tape.linear(hidden, bound[dir.w_hh], None)?;
            let gates = tape.add(input, rec)?;
            let i = tape.slice_cols(gates, 0, h)?;
            let i = tape.sigmoid(i);
            let f = tape.slice_cols(gates, h, 2 * h)?;
            let f = tape.sigmoid(f);
            let g = tape.slice_cols(gates, 2 * h, 3 * h)?;
            let g = tape.tanh(g);
            let o = tape.slice_cols(gates, 3 * h, 4 * h)?;
            let o = tape.sigmoid(o);
            let keep = tape.mul(f, cell)?;
            let write = tape.mul(i, g)?;
            cell = tape.add(keep, write)?;
            let squashed = tape.tanh(cell);
            hidden = tape.mul(o, squashed)?;
            out.push(hidden);
        }
        Ok(out)
    }
}

/// Forward-only posterior for one sentence.
pub fn encode(encoder: &Encoder, store: &ParamStore, sentence: &Sentence) -> Result<GaussianPosterior> {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let vars = encoder.encode_vars(&mut tape, &bound, sentence)?;
    Ok(vars.values(&tape))
}

/// Reparameterized draw `z = μ + exp(½ log σ²) ⊙ ε` recorded on the tape.
pub fn sample_var(tape: &mut Tape, posterior: &PosteriorVars, noise: &[f64]) -> Result<Var> {
    let z_dim = tape.value(posterior.mean).len();
    if noise.len() != z_dim {
        return Err(Error::shape("sample", &[z_dim], &[noise.len()]));
    }
    let half = tape.scale(posterior.log_variance, 0.5);
    let std = tape.exp(half);
    let eps = tape.constant(Tensor::new(tape.value(posterior.mean).shape().to_vec(), noise.to_vec())?);
    let scaled = tape.mul(std, eps)?;
    tape.add(posterior.mean, scaled)
}

/// Reparameterized draw from plain posterior values.
pub fn sample(posterior: &GaussianPosterior, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != posterior.dim() {
        return Err(Error::shape("sample", &[posterior.dim()], &[noise.len()]));
    }
    Ok(posterior
        .mean
        .iter()
        .zip(&posterior.log_variance)
        .zip(noise)
        .map(|((&m, &lv), &e)| m + (0.5 * lv).exp() * e)
        .collect())
}

/// `KL[q || N(0, I)] = ½ Σ (μ² + σ² − 1 − log σ²)`.
pub fn kl_to_standard_normal(posterior: &GaussianPosterior) -> f64 {
    0.5 * posterior
        .mean
        .iter()
        .zip(&posterior.log_variance)
        .map(|(&m, &lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

/// Analytic KL recorded on the tape.
pub fn kl_var(tape: &mut Tape, posterior: &PosteriorVars) -> Result<Var> {
    let mean_sq = tape.mul(posterior.mean, posterior.mean)?;
    let var = tape.exp(posterior.log_variance);
    let a = tape.add(mean_sq, var)?;
    let b = tape.sub(a, posterior.log_variance)?;
    let c = tape.add_scalar(b, -1.0);
    let s = tape.sum(c);
    Ok(tape.scale(s, 0.5))
}

/// Draws a standard-normal noise vector.
pub fn standard_noise(rng: &mut impl Rng, z_dim: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    (0..z_dim).map(|_| StandardNormal.sample(rng)).collect()
}
