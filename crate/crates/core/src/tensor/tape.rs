//! Reverse-mode differentiation over a linear tape of matrix operations.
//!
//! Every operation is evaluated eagerly and appended to the tape; `backward`
//! walks the tape in exact reverse order, so inputs always precede the nodes
//! that consume them.

use std::borrow::Cow;

use super::matrix::gemm;
use super::{Gradients, Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// `x + b` with `b` a 1×cols row broadcast over all rows of `x`.
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    /// Per block of `block` rows: `P_b Q_bᵀ`, stacked into a (B·block)×block matrix.
    BlockGram {
        p: Var,
        q: Var,
        block: usize,
    },
    /// Per block: `A_b V_b` with `A` stacked (B·block)×block and `V` (B·block)×cols.
    BlockMatMul {
        a: Var,
        v: Var,
        block: usize,
    },
    SelectRows(Var, Vec<usize>),
    ConcatRows(Var, Var),
    Sum(Var),
    Mse(Var, Var),
}

struct Node<'p> {
    value: Cow<'p, Matrix>,
    op: Op,
}

/// Recording of a forward computation. Parameters are borrowed, not copied.
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::with_capacity(64),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'p, Matrix>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(Cow::Owned(m), Op::Constant)
    }

    pub fn param(&mut self, store: &'p ParamStore, id: ParamId) -> Var {
        self.push(Cow::Borrowed(store.get(id)), Op::Param(id))
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn check_same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op,
                left: self.shape(a),
                right: self.shape(b),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Cow::Owned(out), Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(Cow::Owned(out), Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(Cow::Owned(out), Op::Sub(a, b)))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if self.shape(bias) != (1, cols) {
            return Err(Error::Shape {
                op: "add_row",
                left: (rows, cols),
                right: self.shape(bias),
            });
        }
        let mut out = self.value(x).clone();
        let b = self.value(bias).data().to_vec();
        for i in 0..rows {
            for (o, bj) in out.row_mut(i).iter_mut().zip(&b) {
                *o += bj;
            }
        }
        Ok(self.push(Cow::Owned(out), Op::AddRow(x, bias)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(Cow::Owned(out), Op::Scale(x, factor))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(Cow::Owned(out), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(Cow::Owned(out), Op::Tanh(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let out = softmax_rows(self.value(x));
        self.push(Cow::Owned(out), Op::SoftmaxRows(x))
    }

    pub fn block_gram(&mut self, p: Var, q: Var, block: usize) -> Result<Var> {
        self.check_same("block_gram", p, q)?;
        let (rows, cols) = self.shape(p);
        if block == 0 || rows % block != 0 {
            return Err(Error::Shape {
                op: "block_gram",
                left: (rows, cols),
                right: (block, block),
            });
        }
        let (pm, qm) = (self.value(p), self.value(q));
        let mut out = Matrix::zeros(rows, block);
        for b in 0..rows / block {
            let base = b * block;
            for i in 0..block {
                let pi = pm.row(base + i);
                let orow = out.row_mut(base + i);
                for (j, o) in orow.iter_mut().enumerate() {
                    *o = dot(pi, qm.row(base + j));
                }
            }
        }
        Ok(self.push(Cow::Owned(out), Op::BlockGram { p, q, block }))
    }

    pub fn block_matmul(&mut self, a: Var, v: Var, block: usize) -> Result<Var> {
        let (ar, ac) = self.shape(a);
        let (vr, vc) = self.shape(v);
        if ac != block || ar != vr || block == 0 || ar % block != 0 {
            return Err(Error::Shape {
                op: "block_matmul",
                left: (ar, ac),
                right: (vr, vc),
            });
        }
        let (am, vm) = (self.value(a), self.value(v));
        let mut out = Matrix::zeros(ar, vc);
        for b in 0..ar / block {
            let base = b * block;
            for i in 0..block {
                let arow = am.row(base + i);
                let orow = out.row_mut(base + i);
                for (j, &aij) in arow.iter().enumerate() {
                    for (o, x) in orow.iter_mut().zip(vm.row(base + j)) {
                        *o += aij * x;
                    }
                }
            }
        }
        Ok(self.push(Cow::Owned(out), Op::BlockMatMul { a, v, block }))
    }

    pub fn select_rows(&mut self, x: Var, rows: Vec<usize>) -> Result<Var> {
        let m = self.value(x);
        if let Some(&bad) = rows.iter().find(|&&r| r >= m.rows()) {
            return Err(Error::contract(format!(
                "select_rows index {bad} out of range for {} rows",
                m.rows()
            )));
        }
        let mut out = Matrix::zeros(rows.len(), m.cols());
        for (k, &r) in rows.iter().enumerate() {
            out.row_mut(k).copy_from_slice(m.row(r));
        }
        Ok(self.push(Cow::Owned(out), Op::SelectRows(x, rows)))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.cols() != mb.cols() {
            return Err(Error::Shape {
                op: "concat_rows",
                left: ma.shape(),
                right: mb.shape(),
            });
        }
        let mut data = Vec::with_capacity(ma.len() + mb.len());
        data.extend_from_slice(ma.data());
        data.extend_from_slice(mb.data());
        let out = Matrix::from_vec(ma.rows() + mb.rows(), ma.cols(), data)?;
        Ok(self.push(Cow::Owned(out), Op::ConcatRows(a, b)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Cow::Owned(Matrix::scalar(s)), Op::Sum(x))
    }

    /// Mean of squared elementwise differences, as a 1×1 node.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.check_same("mse", pred, target)?;
        let (p, t) = (self.value(pred), self.value(target));
        let n = p.len().max(1) as f64;
        let s: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(self.push(Cow::Owned(Matrix::scalar(s / n)), Op::Mse(pred, target)))
    }

    /// Sign of every rectifier input on the tape (true when strictly positive).
    /// Two forwards with equal patterns lie on the same linear piece.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(x) = node.op {
                out.extend(self.value(x).data().iter().map(|&v| v > 0.0));
            }
        }
        out
    }

    /// Accumulates d(loss)/d(parameter) for every parameter of `store` on this tape.
    /// Parameters that the loss does not reach receive zero gradient.
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Result<Gradients> {
        let mut params = Gradients::zeros_like(store);
        self.backward_into(loss, &mut params)?;
        Ok(params)
    }

    /// Like [`Tape::backward`] but returns the gradient of every node, seeded with `upstream`.
    pub fn backward_nodes(&self, out: Var, upstream: Matrix) -> Result<Vec<Option<Matrix>>> {
        if upstream.shape() != self.shape(out) {
            return Err(Error::Shape {
                op: "backward",
                left: self.shape(out),
                right: upstream.shape(),
            });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; out.0 + 1];
        grads[out.0] = Some(upstream);
        self.propagate(out, &mut grads);
        Ok(grads)
    }

    fn backward_into(&self, loss: Var, params: &mut Gradients) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        self.propagate(loss, &mut grads);
        for (i, g) in grads.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&self.nodes[i].op, g) {
                params.get_mut(*id).add_assign(g);
            }
        }
        Ok(())
    }

    fn propagate(&self, out: Var, grads: &mut [Option<Matrix>]) {
        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant | Op::Param(_) => grads[i] = Some(g),
                Op::MatMul(a, b) => {
                    let ga = gemm(&g, false, self.value(*b), true);
                    let gb = gemm(self.value(*a), true, &g, false);
                    acc(grads, *a, ga);
                    acc(grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(grads, *a, g.clone());
                    acc(grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(grads, *b, g.map(|x| -x));
                    acc(grads, *a, g);
                }
                Op::AddRow(x, b) => {
                    acc(grads, *b, g.column_sums());
                    acc(grads, *x, g);
                }
                Op::Scale(x, f) => acc(grads, *x, g.map(|v| v * f)),
                Op::Relu(x) => {
                    let gx = g.zip_map(self.value(*x), |gi, xi| if xi > 0.0 { gi } else { 0.0 });
                    acc(grads, *x, gx);
                }
                Op::Tanh(x) => {
                    let gx = g.zip_map(&node.value, |gi, y| gi * (1.0 - y * y));
                    acc(grads, *x, gx);
                }
                Op::SoftmaxRows(x) => {
                    let y = &node.value;
                    let mut gx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let inner = dot(yr, gr);
                        for ((o, yi), gi) in gx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = yi * (gi - inner);
                        }
                    }
                    acc(grads, *x, gx);
                }
                Op::BlockGram { p, q, block } => {
                    let (pm, qm) = (self.value(*p), self.value(*q));
                    let mut gp = Matrix::zeros(pm.rows(), pm.cols());
                    let mut gq = Matrix::zeros(qm.rows(), qm.cols());
                    for b in 0..pm.rows() / block {
                        let base = b * block;
                        for i in 0..*block {
                            for j in 0..*block {
                                let gij = g.get(base + i, j);
                                if gij == 0.0 {
                                    continue;
                                }
                                axpy(gp.row_mut(base + i), gij, qm.row(base + j));
                                axpy(gq.row_mut(base + j), gij, pm.row(base + i));
                            }
                        }
                    }
                    acc(grads, *p, gp);
                    acc(grads, *q, gq);
                }
                Op::BlockMatMul { a, v, block } => {
                    let (am, vm) = (self.value(*a), self.value(*v));
                    let mut ga = Matrix::zeros(am.rows(), am.cols());
                    let mut gv = Matrix::zeros(vm.rows(), vm.cols());
                    for b in 0..am.rows() / block {
                        let base = b * block;
                        for i in 0..*block {
                            let gi = g.row(base + i);
                            for j in 0..*block {
                                ga.set(base + i, j, dot(gi, vm.row(base + j)));
                                axpy(gv.row_mut(base + j), am.get(base + i, j), gi);
                            }
                        }
                    }
                    acc(grads, *a, ga);
                    acc(grads, *v, gv);
                }
                Op::SelectRows(x, rows) => {
                    let xm = self.value(*x);
                    let mut gx = Matrix::zeros(xm.rows(), xm.cols());
                    for (k, &r) in rows.iter().enumerate() {
                        axpy(gx.row_mut(r), 1.0, g.row(k));
                    }
                    acc(grads, *x, gx);
                }
                Op::ConcatRows(a, b) => {
                    let split = self.value(*a).len();
                    let cols = g.cols();
                    let data = g.into_vec();
                    let ga = Matrix::from_vec(split / cols.max(1), cols, data[..split].to_vec())
                        .expect("concat split");
                    let gb = Matrix::from_vec(
                        (data.len() - split) / cols.max(1),
                        cols,
                        data[split..].to_vec(),
                    )
                    .expect("concat split");
                    acc(grads, *a, ga);
                    acc(grads, *b, gb);
                }
                Op::Sum(x) => {
                    let (r, c) = self.shape(*x);
                    acc(grads, *x, Matrix::filled(r, c, g.data()[0]));
                }
                Op::Mse(p, t) => {
                    let (pm, tm) = (self.value(*p), self.value(*t));
                    let k = 2.0 * g.data()[0] / pm.len().max(1) as f64;
                    let gp = pm.zip_map(tm, |a, b| k * (a - b));
                    acc(grads, *t, gp.map(|x| -x));
                    acc(grads, *p, gp);
                }
            }
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
