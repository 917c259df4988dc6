use rand::Rng;

use crate::diffmath::{xavier_uniform, Bound, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

struct ResidualBlock {
    u: ParamId,
    p: ParamId,
    v: ParamId,
    q: ParamId,
}

/// Input affine layer followed by two residual blocks:
///
/// ```text
/// f(x) = g2(g1(W x + b))
/// g(y) = relu(V relu(U y + p) + q) + y
/// ```
///
/// The output width equals the hidden width.
pub struct ResidualMlp {
    input_dim: usize,
    width: usize,
    w: ParamId,
    b: ParamId,
    blocks: [ResidualBlock; 2],
}

impl ResidualMlp {
    pub(crate) fn register(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        width: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = store.insert(format!("{prefix}.w"), xavier_uniform(&[width, input_dim], rng)?);
        let b = store.insert(format!("{prefix}.b"), Tensor::zeros(&[width]));
        let mut block = |i: usize| -> Result<ResidualBlock> {
            Ok(ResidualBlock {
                u: store.insert(format!("{prefix}.res{i}.u"), xavier_uniform(&[width, width], rng)?),
                p: store.insert(format!("{prefix}.res{i}.p"), Tensor::zeros(&[width])),
                v: store.insert(format!("{prefix}.res{i}.v"), xavier_uniform(&[width, width], rng)?),
                q: store.insert(format!("{prefix}.res{i}.q"), Tensor::zeros(&[width])),
            })
        };
        let blocks = [block(1)?, block(2)?];
        Ok(ResidualMlp {
            input_dim,
            width,
            w,
            b,
            blocks,
        })
    }

    pub(crate) fn attach(store: &ParamStore, prefix: &str) -> Result<Self> {
        let w = store.require(&format!("{prefix}.w"))?;
        let shape = store.get(w).shape();
        if shape.len() != 2 {
            return Err(Error::Checkpoint(format!("{prefix}.w must be a matrix")));
        }
        let (width, input_dim) = (shape[0], shape[1]);
        let block = |i: usize| -> Result<ResidualBlock> {
            Ok(ResidualBlock {
                u: store.require(&format!("{prefix}.res{i}.u"))?,
                p: store.require(&format!("{prefix}.res{i}.p"))?,
                v: store.require(&format!("{prefix}.res{i}.v"))?,
                q: store.require(&format!("{prefix}.res{i}.q"))?,
            })
        };
        Ok(ResidualMlp {
            input_dim,
            width,
            w,
            b: store.require(&format!("{prefix}.b"))?,
            blocks: [block(1)?, block(2)?],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Applies the network to every row of `x` (`[m, input_dim]`).
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let cols = tape.value(x).cols();
        if cols != self.input_dim {
            return Err(Error::shape("residual_mlp", &[self.input_dim], &[cols]));
        }
        let mut y = tape.linear(x, bound[self.w], Some(bound[self.b]))?;
        for block in &self.blocks {
            let h = tape.linear(y, bound[block.u], Some(bound[block.p]))?;
            let h = tape.relu(h);
            let h = tape.linear(h, bound[block.v], Some(bound[block.q]))?;
            let h = tape.relu(h);
            y = tape.add(h, y)?;
        }
        Ok(y)
    }

    /// Parameter ids owned by this network (input layer, then blocks).
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.w, self.b];
        for b in &self.blocks {
            ids.extend([b.u, b.p, b.v, b.q]);
        }
        ids
    }
}

/// Evaluates `mlp` on a single input vector without keeping a tape around.
pub fn residual_mlp_forward(store: &ParamStore, mlp: &ResidualMlp, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != mlp.input_dim {
        return Err(Error::shape("residual_mlp_forward", &[mlp.input_dim], &[x.len()]));
    }
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let xv = tape.constant(Tensor::vector(x.to_vec()));
    let y = mlp.forward(&mut tape, &bound, xv)?;
    Ok(tape.value(y).data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::seeded_rng;

    fn fresh(input: usize, width: usize, seed: u64) -> (ParamStore, ResidualMlp) {
        let mut store = ParamStore::new();
        let mlp = ResidualMlp::register(&mut store, "f", input, width, &mut seeded_rng(seed)).unwrap();
        (store, mlp)
    }

    #[test]
    fn zero_residual_blocks_reduce_to_affine() {
        let (mut store, mlp) = fresh(3, 4, 1);
        for block in &mlp.blocks {
            for id in [block.u, block.p, block.v, block.q] {
                store.get_mut(id).data_mut().fill(0.0);
            }
        }
        store.get_mut(mlp.b).data_mut().copy_from_slice(&[0.5, -0.5, 1.0, 2.0]);
        let x = [1.0, -2.0, 0.25];
        let out = residual_mlp_forward(&store, &mlp, &x).unwrap();
        let w = store.get(mlp.w);
        let b = store.get(mlp.b);
        for r in 0..4 {
            let expected: f64 = w.row(r).iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + b.data()[r];
            assert_eq!(out[r], expected);
        }
    }

    #[test]
    fn hand_evaluated_one_dimensional_network() {
        let (mut store, mlp) = fresh(1, 1, 2);
        let set = |store: &mut ParamStore, id: ParamId, v: f64| store.get_mut(id).data_mut()[0] = v;
        set(&mut store, mlp.w, 2.0);
        set(&mut store, mlp.b, -1.0);
        // block 1: U=1, p=0.5, V=-3, q=4 ; block 2: U=-1, p=0, V=2, q=-1
        let [b1, b2] = &mlp.blocks;
        for (id, v) in [(b1.u, 1.0), (b1.p, 0.5), (b1.v, -3.0), (b1.q, 4.0), (b2.u, -1.0), (b2.p, 0.0), (b2.v, 2.0), (b2.q, -1.0)] {
            set(&mut store, id, v);
        }
        // x = 1.5: y0 = 2*1.5 - 1 = 2
        // block 1: relu(-3 * relu(2 + 0.5) + 4) + 2 = relu(-3.5) + 2 = 2
        // block 2: relu(2 * relu(-2) - 1) + 2 = 0 + 2 = 2
        assert_eq!(residual_mlp_forward(&store, &mlp, &[1.5]).unwrap(), vec![2.0]);
        // x = 0.25: y0 = -0.5
        // block 1: relu(-3 * relu(0) + 4) - 0.5 = 3.5
        // block 2: relu(2 * relu(-3.5) - 1) + 3.5 = 3.5
        assert_eq!(residual_mlp_forward(&store, &mlp, &[0.25]).unwrap(), vec![3.5]);
        // x = -1: y0 = -3
        // block 1: relu(-3*relu(-2.5) + 4) - 3 = 1
        // block 2: relu(2*relu(-1) - 1) + 1 = 1
        assert_eq!(residual_mlp_forward(&store, &mlp, &[-1.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn width_mismatch() {
        let (store, mlp) = fresh(3, 2, 3);
        assert!(matches!(
            residual_mlp_forward(&store, &mlp, &[1.0, 2.0]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn attach_recovers_layout() {
        let (store, mlp) = fresh(5, 3, 4);
        let again = ResidualMlp::attach(&store, "f").unwrap();
        assert_eq!((again.input_dim, again.width), (5, 3));
        assert_eq!(again.param_ids(), mlp.param_ids());
    }
}
