use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Seedable generator used for every stochastic step in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `(fan_in, fan_out)` for a weight of the given shape. Matrices are stored
/// `[out, in]`; vectors count as `fan_in = fan_out = len`.
pub fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (*n, *n),
        [out, inp] => (*inp, *out),
        _ => {
            let receptive: usize = shape[2..].iter().product();
            (shape[1] * receptive, shape[0] * receptive)
        }
    }
}

/// Xavier/Glorot uniform initialization: entries drawn from `U[-a, a]` with
/// `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform(shape: &[usize], rng: &mut impl Rng) -> Result<Tensor> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::invalid(
            "xavier_uniform",
            format!("shape {shape:?} has no elements"),
        ));
    }
    let (fan_in, fan_out) = fans(shape);
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let numel = shape.iter().product();
    let data = (0..numel).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data)
}

/// Convenience wrapper seeding a fresh generator.
pub fn xavier_uniform_init(shape: &[usize], seed: u64) -> Result<Tensor> {
    xavier_uniform(shape, &mut seeded_rng(seed))
}
