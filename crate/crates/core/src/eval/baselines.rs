use std::str::FromStr;

use rand::Rng;

use super::f1::SpanSet;
use crate::error::{Error, Result};

/// Trivial tree constructions used as reference rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Left,
    Right,
    Random,
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Baseline::Left),
            "right" => Ok(Baseline::Right),
            "random" => Ok(Baseline::Random),
            other => Err(Error::Config(format!("unknown baseline {other:?}"))),
        }
    }
}

/// Internal spans (width ≥ 2) of a baseline binary tree over `len` tokens.
///
/// Random trees choose a uniform split point at every span, which is not
/// uniform over tree shapes: for four tokens the two fully left- and
/// right-branching shapes and the two mixed ones each have probability 1/6,
/// and the balanced shape 1/3.
pub fn baseline_spans(kind: Baseline, len: usize, rng: &mut impl Rng) -> Result<SpanSet> {
    if len < 2 {
        return Err(Error::SentenceTooShort(len));
    }
    let mut out = SpanSet::new();
    match kind {
        Baseline::Left => (1..len).for_each(|j| out.insert(0, j)),
        Baseline::Right => (0..len - 1).for_each(|i| out.insert(i, len - 1)),
        Baseline::Random => {
            let mut stack = vec![(0, len - 1)];
            while let Some((i, j)) = stack.pop() {
                if i == j {
                    continue;
                }
                out.insert(i, j);
                let k = rng.random_range(i..j);
                stack.push((k + 1, j));
                stack.push((i, k));
            }
        }
    }
    Ok(out)
}
