//! Define-by-run reverse-mode automatic differentiation.
//!
//! Every primitive appends a node to the [`Tape`] holding its forward value
//! and enough information to push an output gradient back to its inputs.
//! Nodes are appended in evaluation order, so walking the node list from the
//! loss towards the front is a reverse topological traversal.

use super::tensor::{log_softmax_into, logsumexp, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for an operation implemented outside this module.
///
/// `backward` receives the forward values of the inputs, the forward output
/// and the gradient flowing into the output; it returns one gradient per
/// input (or `None` when an input receives no gradient).
pub trait CustomOp {
    fn name(&self) -> &'static str;
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>>;
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Maximum(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AddRow(Var, Var),
    MatMul(Var, Var),
    Linear(Var, Var, Option<Var>),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Clamp(Var, f64, f64),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    RepeatRows(Var),
    GatherRows(Var, Vec<usize>),
    MaxPoolRows(Var, Vec<usize>),
    LogSoftmax(Var),
    LogSumExp(Var),
    Sum(Var),
    Reshape(Var),
    Custom(Vec<Var>, Box<dyn CustomOp>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of primitive operations.
///
/// One tape per worker; a tape is consumed by [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, or `None` when `var` does
    /// not influence the loss.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

fn rank2(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf (parameter or constant input).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        Ok(())
    }

    fn zip_with(&mut self, op_name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(op_name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(a);
        Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
            .expect("map preserves shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_with("sub", a, b, |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Elementwise maximum; ties send the gradient to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_with("maximum", a, b, f64::max)?;
        Ok(self.push(v, Op::Maximum(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.map(a, |x| x * factor);
        self.push(v, Op::Scale(a, factor))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.map(a, |x| x + c);
        self.push(v, Op::AddScalar(a))
    }

    /// Adds a length-`n` vector to every row of an `[m, n]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        let n = ta.cols();
        if tr.len() != n {
            return Err(Error::shape("add_row", ta.shape(), tr.shape()));
        }
        let mut data = ta.data().to_vec();
        for chunk in data.chunks_mut(n) {
            for (x, r) in chunk.iter_mut().zip(tr.data()) {
                *x += r;
            }
        }
        let v = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(v, Op::AddRow(a, row)))
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ((m, k), (k2, n)) = (rank2(ta), rank2(tb));
        if k != k2 || tb.shape().len() != 2 {
            return Err(Error::shape("matmul", ta.shape(), tb.shape()));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(ta.data(), tb.data(), &mut out, m, k, n);
        let v = Tensor::matrix(m, n, out)?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// Affine map `x W^T + b` with `x: [m, in]`, `W: [out, in]`, `b: [out]`.
    /// A rank-1 `x` yields a rank-1 output.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        let ((m, k), (o, k2)) = (rank2(tx), rank2(tw));
        if k != k2 || tw.shape().len() != 2 {
            return Err(Error::shape("linear", tx.shape(), tw.shape()));
        }
        let mut out = vec![0.0; m * o];
        for r in 0..m {
            let xr = &tx.data()[r * k..(r + 1) * k];
            for c in 0..o {
                let wr = &tw.data()[c * k..(c + 1) * k];
                out[r * o + c] = dot(xr, wr);
            }
        }
        if let Some(b) = b {
            let tb = self.value(b);
            if tb.len() != o {
                return Err(Error::shape("linear", tw.shape(), tb.shape()));
            }
            for chunk in out.chunks_mut(o) {
                for (x, bv) in chunk.iter_mut().zip(tb.data()) {
                    *x += bv;
                }
            }
        }
        let shape = if tx.shape().len() == 1 { vec![o] } else { vec![m, o] };
        let v = Tensor::new(shape, out)?;
        Ok(self.push(v, Op::Linear(x, w, b)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.map(a, |x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.map(a, sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.map(a, f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.map(a, f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.map(a, f64::ln);
        self.push(v, Op::Log(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping was active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.map(a, |x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    /// Concatenates along the last axis. Both inputs must have the same
    /// number of rows.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ((m, p), (m2, q)) = (rank2(ta), rank2(tb));
        if m != m2 || ta.shape().len() != tb.shape().len() {
            return Err(Error::shape("concat_cols", ta.shape(), tb.shape()));
        }
        let mut data = Vec::with_capacity(m * (p + q));
        for r in 0..m {
            data.extend_from_slice(ta.row(r));
            data.extend_from_slice(tb.row(r));
        }
        let shape = if ta.shape().len() == 1 { vec![p + q] } else { vec![m, p + q] };
        let v = Tensor::new(shape, data)?;
        Ok(self.push(v, Op::ConcatCols(a, b)))
    }

    /// Stacks row blocks on top of each other. Every input must have the same
    /// number of columns; the output is rank 2.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::invalid("concat_rows", "no inputs"));
        };
        let n = self.value(first).cols();
        let mut data = Vec::new();
        let mut m = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != n {
                return Err(Error::shape("concat_rows", self.value(first).shape(), t.shape()));
            }
            data.extend_from_slice(t.data());
            m += t.rows();
        }
        let v = Tensor::matrix(m, n, data)?;
        Ok(self.push(v, Op::ConcatRows(parts.to_vec())))
    }

    /// Columns `start..end` of every row.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = rank2(ta);
        if start >= end || end > n {
            return Err(Error::invalid(
                "slice_cols",
                format!("range {start}..{end} out of bounds for {n} columns"),
            ));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for r in 0..m {
            data.extend_from_slice(&ta.row(r)[start..end]);
        }
        let shape = if ta.shape().len() == 1 { vec![w] } else { vec![m, w] };
        let v = Tensor::new(shape, data)?;
        Ok(self.push(v, Op::SliceCols(a, start)))
    }

    /// Repeats a single row `m` times, producing `[m, n]`.
    pub fn repeat_rows(&mut self, a: Var, m: usize) -> Result<Var> {
        let ta = self.value(a);
        if ta.rows() != 1 {
            return Err(Error::shape("repeat_rows", ta.shape(), &[1, ta.cols()]));
        }
        let n = ta.cols();
        let data = ta.data().repeat(m);
        let v = Tensor::matrix(m, n, data)?;
        Ok(self.push(v, Op::RepeatRows(a)))
    }

    /// Embedding lookup: rows `ids` of an `[V, d]` table, giving `[len, d]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        let (v, d) = rank2(tt);
        let mut data = Vec::with_capacity(ids.len() * d);
        for (pos, &id) in ids.iter().enumerate() {
            if id >= v {
                return Err(Error::TokenOutOfRange {
                    id,
                    position: pos,
                    vocab_size: v,
                });
            }
            data.extend_from_slice(tt.row(id));
        }
        let out = Tensor::matrix(ids.len(), d, data)?;
        Ok(self.push(out, Op::GatherRows(table, ids.to_vec())))
    }

    /// Column-wise maximum over rows: `[m, n] -> [n]`.
    pub fn max_pool_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let (m, n) = rank2(ta);
        let mut best = ta.row(0).to_vec();
        let mut arg = vec![0usize; n];
        for r in 1..m {
            for (c, &x) in ta.row(r).iter().enumerate() {
                if x > best[c] {
                    best[c] = x;
                    arg[c] = r;
                }
            }
        }
        let v = Tensor::vector(best);
        self.push(v, Op::MaxPoolRows(a, arg))
    }

    /// Row-wise log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let n = ta.cols();
        let mut out = vec![0.0; ta.len()];
        for (src, dst) in ta.data().chunks(n).zip(out.chunks_mut(n)) {
            log_softmax_into(src, dst);
        }
        let v = Tensor::new(ta.shape().to_vec(), out).expect("same shape");
        self.push(v, Op::LogSoftmax(a))
    }

    /// Row-wise logsumexp over the last axis: `[m, n] -> [m]`.
    pub fn logsumexp(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let out: Vec<f64> = ta.data().chunks(ta.cols()).map(logsumexp).collect();
        let v = Tensor::vector(out);
        self.push(v, Op::LogSumExp(a))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let p = self.mul(a, b)?;
        Ok(self.sum(p))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).reshaped(shape)?;
        Ok(self.push(v, Op::Reshape(a)))
    }

    /// Records an externally computed operation together with its backward
    /// rule.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, op: Box<dyn CustomOp>) -> Var {
        self.push(output, Op::Custom(inputs.to_vec(), op))
    }

    /// Propagates the gradient of the scalar `loss` to every node it depends
    /// on. The tape can only be differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let loss_shape = self.value(loss).shape().to_vec();
        if !self.value(loss).is_scalar() {
            return Err(Error::NotScalar(loss_shape));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(&loss_shape, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let gd = g.data();
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, val(*a), |buf| add_into(buf, gd));
                accumulate(grads, *b, val(*b), |buf| add_into(buf, gd));
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, val(*a), |buf| add_into(buf, gd));
                accumulate(grads, *b, val(*b), |buf| {
                    for (x, gi) in buf.iter_mut().zip(gd) {
                        *x -= gi;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a).data(), val(*b).data());
                accumulate(grads, *a, val(*a), |buf| {
                    for i in 0..buf.len() {
                        buf[i] += gd[i] * tb[i];
                    }
                });
                accumulate(grads, *b, val(*b), |buf| {
                    for i in 0..buf.len() {
                        buf[i] += gd[i] * ta[i];
                    }
                });
            }
            Op::Maximum(a, b) => {
                let (ta, tb) = (val(*a).data(), val(*b).data());
                accumulate(grads, *a, val(*a), |buf| {
                    for i in 0..buf.len() {
                        if ta[i] >= tb[i] {
                            buf[i] += gd[i];
                        }
                    }
                });
                accumulate(grads, *b, val(*b), |buf| {
                    for i in 0..buf.len() {
                        if ta[i] < tb[i] {
                            buf[i] += gd[i];
                        }
                    }
                });
            }
            Op::Scale(a, f) => accumulate(grads, *a, val(*a), |buf| {
                for (x, gi) in buf.iter_mut().zip(gd) {
                    *x += gi * f;
                }
            }),
            Op::AddScalar(a) | Op::Reshape(a) => {
                accumulate(grads, *a, val(*a), |buf| add_into(buf, gd))
            }
            Op::AddRow(a, row) => {
                accumulate(grads, *a, val(*a), |buf| add_into(buf, gd));
                let n = val(*row).len();
                accumulate(grads, *row, val(*row), |buf| {
                    for chunk in gd.chunks(n) {
                        add_into(buf, chunk);
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let ((m, k), (_, n)) = (rank2(ta), rank2(tb));
                // dA = G B^T, dB = A^T G
                accumulate(grads, *a, ta, |buf| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += gd[i * n + j] * tb.data()[p * n + j];
                            }
                            buf[i * k + p] += s;
                        }
                    }
                });
                accumulate(grads, *b, tb, |buf| {
                    for i in 0..m {
                        for p in 0..k {
                            let av = ta.data()[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                buf[p * n + j] += av * gd[i * n + j];
                            }
                        }
                    }
                });
            }
            Op::Linear(x, w, b) => {
                let (tx, tw) = (val(*x), val(*w));
                let ((m, k), (o, _)) = (rank2(tx), rank2(tw));
                // dX = G W, dW = G^T X, db = sum_rows G
                accumulate(grads, *x, tx, |buf| {
                    for r in 0..m {
                        for c in 0..o {
                            let gv = gd[r * o + c];
                            if gv == 0.0 {
                                continue;
                            }
                            let wr = &tw.data()[c * k..(c + 1) * k];
                            for (dst, wv) in buf[r * k..(r + 1) * k].iter_mut().zip(wr) {
                                *dst += gv * wv;
                            }
                        }
                    }
                });
                accumulate(grads, *w, tw, |buf| {
                    for r in 0..m {
                        let xr = &tx.data()[r * k..(r + 1) * k];
                        for c in 0..o {
                            let gv = gd[r * o + c];
                            if gv == 0.0 {
                                continue;
                            }
                            for (dst, xv) in buf[c * k..(c + 1) * k].iter_mut().zip(xr) {
                                *dst += gv * xv;
                            }
                        }
                    }
                });
                if let Some(b) = b {
                    accumulate(grads, *b, val(*b), |buf| {
                        for chunk in gd.chunks(o) {
                            add_into(buf, chunk);
                        }
                    });
                }
            }
            Op::Relu(a) => {
                let ta = val(*a).data();
                accumulate(grads, *a, val(*a), |buf| {
                    for i in 0..buf.len() {
                        if ta[i] > 0.0 {
                            buf[i] += gd[i];
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = out.data();
                accumulate(grads, *a, val(*a), |buf| {
                    for i in 0..buf.len() {
                        buf[i] += gd[i] * y[i] * (1.0 - y[i]);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = out.data();
                accumulate(grads, *a, val(*a), |buf| {
                    for i in 0..buf.len() {
                        buf[i] += gd[i] * (1.0 - y[i] * y[i]);
                    }
                });
            }
            Op::Exp(a) => {
                let y = out.data();
                accumulate(grads, *a, val(*a), |buf| {
                    for i in 0..buf.len() {
                        buf[i] += gd[i] * y[i];
                    }
                });
            }
            Op::Log(a) => {
                let ta = val(*a).data();
                accumulate(grads, *a, val(*a), |buf| {
                    for i in 0..buf.len() {
                        buf[i] += gd[i] / ta[i];
                    }
                });
            }
            Op::Clamp(a, lo, hi) => {
                let ta = val(*a).data();
                accumulate(grads, *a, val(*a), |buf| {
                    for i in 0..buf.len() {
                        if ta[i] >= *lo && ta[i] <= *hi {
                            buf[i] += gd[i];
                        }
                    }
                });
            }
            Op::ConcatCols(a, b) => {
                let (p, q) = (val(*a).cols(), val(*b).cols());
                let w = p + q;
                accumulate(grads, *a, val(*a), |buf| {
                    for (r, chunk) in buf.chunks_mut(p).enumerate() {
                        add_into(chunk, &gd[r * w..r * w + p]);
                    }
                });
                accumulate(grads, *b, val(*b), |buf| {
                    for (r, chunk) in buf.chunks_mut(q).enumerate() {
                        add_into(chunk, &gd[r * w + p..(r + 1) * w]);
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = val(*p).len();
                    accumulate(grads, *p, val(*p), |buf| add_into(buf, &gd[offset..offset + len]));
                    offset += len;
                }
            }
            Op::SliceCols(a, start) => {
                let n = val(*a).cols();
                let w = out.cols();
                accumulate(grads, *a, val(*a), |buf| {
                    for (r, chunk) in buf.chunks_mut(n).enumerate() {
                        add_into(&mut chunk[*start..*start + w], &gd[r * w..(r + 1) * w]);
                    }
                });
            }
            Op::RepeatRows(a) => {
                let n = val(*a).len();
                accumulate(grads, *a, val(*a), |buf| {
                    for chunk in gd.chunks(n) {
                        add_into(buf, chunk);
                    }
                });
            }
            Op::GatherRows(table, ids) => {
                let d = val(*table).cols();
                accumulate(grads, *table, val(*table), |buf| {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut buf[id * d..(id + 1) * d], &gd[r * d..(r + 1) * d]);
                    }
                });
            }
            Op::MaxPoolRows(a, arg) => {
                let n = val(*a).cols();
                accumulate(grads, *a, val(*a), |buf| {
                    for (c, &r) in arg.iter().enumerate() {
                        buf[r * n + c] += gd[c];
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let n = out.cols();
                let y = out.data();
                accumulate(grads, *a, val(*a), |buf| {
                    for ((dst, gr), yr) in buf.chunks_mut(n).zip(gd.chunks(n)).zip(y.chunks(n)) {
                        let gsum: f64 = gr.iter().sum();
                        for i in 0..n {
                            dst[i] += gr[i] - yr[i].exp() * gsum;
                        }
                    }
                });
            }
            Op::LogSumExp(a) => {
                let ta = val(*a);
                let n = ta.cols();
                let y = out.data();
                accumulate(grads, *a, ta, |buf| {
                    for (r, (dst, xr)) in buf.chunks_mut(n).zip(ta.data().chunks(n)).enumerate() {
                        if y[r] == f64::NEG_INFINITY {
                            continue;
                        }
                        for i in 0..n {
                            dst[i] += gd[r] * (xr[i] - y[r]).exp();
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let gv = gd[0];
                accumulate(grads, *a, val(*a), |buf| {
                    for x in buf.iter_mut() {
                        *x += gv;
                    }
                });
            }
            Op::Custom(inputs, op) => {
                let ins: Vec<&Tensor> = inputs.iter().map(|&v| val(v)).collect();
                let gs = op.backward(&ins, out, g);
                for (v, gi) in inputs.iter().zip(gs) {
                    if let Some(gi) = gi {
                        accumulate(grads, *v, val(*v), |buf| add_into(buf, gi.data()));
                    }
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, like: &Tensor, f: impl FnOnce(&mut [f64])) {
    let slot = &mut grads[v.0];
    let buf = slot.get_or_insert_with(|| Tensor::zeros(like.shape()));
    f(buf.data_mut());
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in out[i * n..(i + 1) * n].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}
