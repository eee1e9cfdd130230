//! Reverse-mode differentiation over dense and sparse matrix operations.
//!
//! Operations are appended to a [`Tape`] as they execute, so the record
//! order is a topological order and [`Tape::backward`] is a single reverse
//! sweep. Gradients reach [`Parameter`]s through the [`ParamStore`] they
//! were read from.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::error::{Error, Result};
use crate::sparse::Csr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
}

/// Named parameters, kept in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter; fails if the name is taken.
    pub fn insert(&mut self, name: impl Into<String>, value: DenseMatrix) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("parameter {name:?} registered twice")));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        let grad = DenseMatrix::zeros(value.rows(), value.cols());
        self.params.push(Parameter { name, value, grad });
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParameter(name.to_owned()))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Result<&Parameter> {
        Ok(self.get(self.id(name)?))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.as_mut_slice().fill(0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduce {
    Sum,
    Mean,
    Max,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Spmm(Arc<Csr<f64>>, Var),
    SpmmValues(Arc<Csr<f64>>, Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    AddRowBias(Var, Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    LeakyRelu(Var, f64),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    GatherRows(Var, Arc<Vec<usize>>),
    ScaleRows(Var, Var),
    SegmentReduce {
        x: Var,
        offsets: Arc<Vec<usize>>,
        agg: Reduce,
        argmax: Vec<usize>,
    },
    SegmentSoftmax(Var, Arc<Vec<usize>>),
    Sum(Var),
    CrossEntropy(Var, Arc<Vec<usize>>),
}

struct Node {
    value: DenseMatrix,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    empty_groups: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of mean/max groups so far that had no members and produced a
    /// zero row.
    pub fn empty_groups(&self) -> usize {
        self.empty_groups
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: DenseMatrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).value.clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// Constant sparse matrix times a dense variable.
    pub fn spmm(&mut self, s: Arc<Csr<f64>>, x: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if s.cols() != rows {
            return Err(Error::shape("spmm", s.shape(), (rows, cols)));
        }
        let value = DenseMatrix::from_vec(s.rows(), cols, s.spmm(self.value(x).as_slice(), cols))?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Spmm(s, x), rg))
    }

    /// Sparse matrix with pattern `pattern` and stored values taken from the
    /// `nnz x 1` variable `values`, times `x`.
    pub fn spmm_values(&mut self, pattern: Arc<Csr<f64>>, values: Var, x: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if pattern.cols() != rows {
            return Err(Error::shape("spmm_values", pattern.shape(), (rows, cols)));
        }
        if self.shape(values) != (pattern.nnz(), 1) {
            return Err(Error::shape("spmm_values", (pattern.nnz(), 1), self.shape(values)));
        }
        let weighted = pattern.with_values(self.value(values).as_slice().to_vec());
        let value = DenseMatrix::from_vec(pattern.rows(), cols, weighted.spmm(self.value(x).as_slice(), cols))?;
        let rg = self.rg(values) || self.rg(x);
        Ok(self.push(value, Op::SpmmValues(pattern, values, x), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "hadamard", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Hadamard(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, factor), rg)
    }

    /// Adds the `1 x d` row `bias` to every row of `x`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if self.shape(bias) != (1, cols) {
            return Err(Error::shape("add_row_bias", (rows, cols), self.shape(bias)));
        }
        let mut value = self.value(x).clone();
        let b = self.value(bias).as_slice().to_vec();
        for r in 0..rows {
            for (v, bb) in value.row_mut(r).iter_mut().zip(&b) {
                *v += bb;
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(value, Op::AddRowBias(x, bias), rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(x);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::tanh);
        let rg = self.rg(x);
        self.push(value, Op::Tanh(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        let rg = self.rg(x);
        self.push(value, Op::Sigmoid(x), rg)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        let rg = self.rg(x);
        self.push(value, Op::LeakyRelu(x, slope), rg)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let mut value = src.clone();
        for r in 0..src.rows() {
            softmax_in_place(value.row_mut(r));
        }
        let rg = self.rg(x);
        self.push(value, Op::SoftmaxRows(x), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::InvalidArgument("concat of zero matrices".into()));
        };
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(Error::shape("concat_cols", self.shape(first), self.shape(p)));
            }
            cols += self.shape(p).1;
        }
        let mut value = DenseMatrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                value.row_mut(r)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Stacks matrices of equal width on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::InvalidArgument("concat of zero matrices".into()));
        };
        let cols = self.shape(first).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            rows += self.shape(p).0;
            if self.shape(p).1 != cols {
                return Err(Error::shape("concat_rows", self.shape(first), self.shape(p)));
            }
            data.extend_from_slice(self.value(p).as_slice());
        }
        let value = DenseMatrix::from_vec(rows, cols, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Reinterprets the row-major values of `x` with a new shape.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = DenseMatrix::from_vec(rows, cols, self.value(x).as_slice().to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Output row `i` is row `indices[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, indices: Arc<Vec<usize>>) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::InvalidArgument(format!("gather index {bad} out of {rows} rows")));
        }
        let mut value = DenseMatrix::zeros(indices.len(), cols);
        for (i, &src) in indices.iter().enumerate() {
            value.row_mut(i).copy_from_slice(self.value(x).row(src));
        }
        let rg = self.rg(x);
        Ok(self.push(value, Op::GatherRows(x, indices), rg))
    }

    /// Multiplies row `i` of `x` by the scalar `v[i]` (`v` is `n x 1`).
    pub fn scale_rows(&mut self, x: Var, v: Var) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if self.shape(v) != (rows, 1) {
            return Err(Error::shape("scale_rows", (rows, cols), self.shape(v)));
        }
        let mut value = self.value(x).clone();
        for r in 0..rows {
            let s = self.value(v).get(r, 0);
            for e in value.row_mut(r) {
                *e *= s;
            }
        }
        let rg = self.rg(x) || self.rg(v);
        Ok(self.push(value, Op::ScaleRows(x, v), rg))
    }

    /// Reduces consecutive row ranges `offsets[s]..offsets[s + 1]` of `x`
    /// into one output row per segment. Empty segments give a zero row and
    /// bump [`Tape::empty_groups`] for mean and max.
    pub fn segment_reduce(&mut self, x: Var, offsets: Arc<Vec<usize>>, agg: Reduce) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        check_offsets(&offsets, rows)?;
        let segments = offsets.len() - 1;
        let src = self.value(x);
        let mut value = DenseMatrix::zeros(segments, cols);
        let mut argmax = Vec::new();
        let mut empty = 0;
        if agg == Reduce::Max {
            argmax = vec![usize::MAX; segments * cols];
        }
        for s in 0..segments {
            let (lo, hi) = (offsets[s], offsets[s + 1]);
            if lo == hi {
                if agg != Reduce::Sum {
                    empty += 1;
                }
                continue;
            }
            let out = value.row_mut(s);
            match agg {
                Reduce::Sum | Reduce::Mean => {
                    for r in lo..hi {
                        for (o, v) in out.iter_mut().zip(src.row(r)) {
                            *o += v;
                        }
                    }
                    if agg == Reduce::Mean {
                        let n = (hi - lo) as f64;
                        out.iter_mut().for_each(|o| *o /= n);
                    }
                }
                Reduce::Max => {
                    for c in 0..cols {
                        let mut best = lo;
                        for r in lo + 1..hi {
                            if src.get(r, c) > src.get(best, c) {
                                best = r;
                            }
                        }
                        out[c] = src.get(best, c);
                        argmax[s * cols + c] = best;
                    }
                }
            }
        }
        self.empty_groups += empty;
        let rg = self.rg(x);
        Ok(self.push(
            value,
            Op::SegmentReduce {
                x,
                offsets,
                agg,
                argmax,
            },
            rg,
        ))
    }

    /// Reduces arbitrary (possibly overlapping) row groups of `x`.
    pub fn group_reduce(&mut self, x: Var, groups: &[Vec<usize>], agg: Reduce) -> Result<Var> {
        let mut indices = Vec::new();
        let mut offsets = vec![0];
        for g in groups {
            indices.extend_from_slice(g);
            offsets.push(indices.len());
        }
        let gathered = self.gather_rows(x, Arc::new(indices))?;
        self.segment_reduce(gathered, Arc::new(offsets), agg)
    }

    /// Reduces all rows into a single `1 x d` row.
    pub fn reduce_rows(&mut self, x: Var, agg: Reduce) -> Result<Var> {
        let rows = self.shape(x).0;
        self.segment_reduce(x, Arc::new(vec![0, rows]), agg)
    }

    /// Softmax of an `n x 1` column within each segment.
    pub fn segment_softmax(&mut self, x: Var, offsets: Arc<Vec<usize>>) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if cols != 1 {
            return Err(Error::shape("segment_softmax", (rows, cols), (rows, 1)));
        }
        check_offsets(&offsets, rows)?;
        let mut value = self.value(x).clone();
        for s in 0..offsets.len() - 1 {
            softmax_in_place(&mut value.as_mut_slice()[offsets[s]..offsets[s + 1]]);
        }
        let rg = self.rg(x);
        Ok(self.push(value, Op::SegmentSoftmax(x, offsets), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = DenseMatrix::filled(1, 1, self.value(x).sum());
        let rg = self.rg(x);
        self.push(value, Op::Sum(x), rg)
    }

    /// Mean squared error between `a` and a target of the same shape.
    pub fn mse(&mut self, a: Var, target: Var) -> Result<Var> {
        let diff = self.sub(a, target)?;
        let sq = self.hadamard(diff, diff)?;
        let total = self.sum(sq);
        let n = self.value(a).len().max(1) as f64;
        Ok(self.scale(total, 1.0 / n))
    }

    /// Mean softmax cross-entropy of `logits` rows against class labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: Arc<Vec<usize>>) -> Result<Var> {
        let (rows, cols) = self.shape(logits);
        if labels.len() != rows {
            return Err(Error::shape("cross_entropy", (rows, cols), (labels.len(), 1)));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= cols) {
            return Err(Error::InvalidArgument(format!("label {bad} out of {cols} classes")));
        }
        let src = self.value(logits);
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = src.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[label];
        }
        let value = DenseMatrix::filled(1, 1, total / rows.max(1) as f64);
        let rg = self.rg(logits);
        Ok(self.push(value, Op::CrossEntropy(logits, labels), rg))
    }

    /// Back-propagates from the `1 x 1` variable `loss`, adding gradients
    /// into `store`. Accumulation follows reverse record order.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::shape("backward", self.shape(loss), (1, 1)));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(DenseMatrix::filled(1, 1, 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads, store);
        }
        Ok(())
    }

    fn propagate(&self, node: &Node, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>], store: &mut ParamStore) {
        let mut send = |v: Var, delta: DenseMatrix| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => store.get_mut(*id).grad.add_assign(g),
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    send(*a, g.matmul(&self.value(*b).transpose()).expect("shapes checked"));
                }
                if self.rg(*b) {
                    send(*b, self.value(*a).transpose().matmul(g).expect("shapes checked"));
                }
            }
            Op::Spmm(s, x) => {
                let st = s.transpose();
                let d = DenseMatrix::from_vec(st.rows(), g.cols(), st.spmm(g.as_slice(), g.cols()));
                send(*x, d.expect("shapes checked"));
            }
            Op::SpmmValues(pattern, values, x) => {
                let vals = self.value(*values).as_slice();
                let xs = self.value(*x);
                let rows = pattern.row_indices();
                let cols = pattern.col_indices();
                if self.rg(*values) {
                    let mut dv = DenseMatrix::zeros(vals.len(), 1);
                    for k in 0..vals.len() {
                        let dot: f64 = g.row(rows[k]).iter().zip(xs.row(cols[k])).map(|(a, b)| a * b).sum();
                        dv.set(k, 0, dot);
                    }
                    send(*values, dv);
                }
                if self.rg(*x) {
                    let mut dx = DenseMatrix::zeros(xs.rows(), xs.cols());
                    for k in 0..vals.len() {
                        let grow = g.row(rows[k]).to_vec();
                        for (d, gg) in dx.row_mut(cols[k]).iter_mut().zip(grow) {
                            *d += vals[k] * gg;
                        }
                    }
                    send(*x, dx);
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.map(|v| -v));
            }
            Op::Hadamard(a, b) => {
                if self.rg(*a) {
                    send(*a, g.zip_map(self.value(*b), "hadamard", |x, y| x * y).expect("same shape"));
                }
                if self.rg(*b) {
                    send(*b, g.zip_map(self.value(*a), "hadamard", |x, y| x * y).expect("same shape"));
                }
            }
            Op::Scale(a, f) => send(*a, g.map(|v| v * f)),
            Op::AddRowBias(x, b) => {
                send(*x, g.clone());
                if self.rg(*b) {
                    let mut db = DenseMatrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, v) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    send(*b, db);
                }
            }
            Op::Relu(x) => {
                let d = g.zip_map(self.value(*x), "relu", |gg, v| if v > 0.0 { gg } else { 0.0 });
                send(*x, d.expect("same shape"));
            }
            Op::Tanh(x) => {
                let d = g.zip_map(&node.value, "tanh", |gg, y| gg * (1.0 - y * y));
                send(*x, d.expect("same shape"));
            }
            Op::Sigmoid(x) => {
                let d = g.zip_map(&node.value, "sigmoid", |gg, y| gg * y * (1.0 - y));
                send(*x, d.expect("same shape"));
            }
            Op::LeakyRelu(x, slope) => {
                let s = *slope;
                let d = g.zip_map(self.value(*x), "leaky_relu", |gg, v| if v > 0.0 { gg } else { s * gg });
                send(*x, d.expect("same shape"));
            }
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let mut d = DenseMatrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    softmax_backward(y.row(r), g.row(r), d.row_mut(r));
                }
                send(*x, d);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = self.shape(p);
                    if self.rg(p) {
                        let mut d = DenseMatrix::zeros(rows, cols);
                        for r in 0..rows {
                            d.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        send(p, d);
                    }
                    offset += cols;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.rg(p) {
                        let (rows, cols) = self.shape(p);
                        let d = DenseMatrix::from_vec(rows, cols, g.as_slice()[offset..offset + len].to_vec());
                        send(p, d.expect("shapes checked"));
                    }
                    offset += len;
                }
            }
            Op::Reshape(x) => {
                let (rows, cols) = self.shape(*x);
                send(*x, DenseMatrix::from_vec(rows, cols, g.as_slice().to_vec()).expect("same size"));
            }
            Op::GatherRows(x, indices) => {
                let (rows, cols) = self.shape(*x);
                let mut d = DenseMatrix::zeros(rows, cols);
                for (i, &src) in indices.iter().enumerate() {
                    for (dd, gg) in d.row_mut(src).iter_mut().zip(g.row(i)) {
                        *dd += gg;
                    }
                }
                send(*x, d);
            }
            Op::ScaleRows(x, v) => {
                let xs = self.value(*x);
                let vs = self.value(*v);
                if self.rg(*x) {
                    let mut d = g.clone();
                    for r in 0..d.rows() {
                        let s = vs.get(r, 0);
                        d.row_mut(r).iter_mut().for_each(|e| *e *= s);
                    }
                    send(*x, d);
                }
                if self.rg(*v) {
                    let mut dv = DenseMatrix::zeros(vs.rows(), 1);
                    for r in 0..vs.rows() {
                        dv.set(r, 0, g.row(r).iter().zip(xs.row(r)).map(|(a, b)| a * b).sum());
                    }
                    send(*v, dv);
                }
            }
            Op::SegmentReduce {
                x,
                offsets,
                agg,
                argmax,
            } => {
                let (rows, cols) = self.shape(*x);
                let mut d = DenseMatrix::zeros(rows, cols);
                for s in 0..offsets.len() - 1 {
                    let (lo, hi) = (offsets[s], offsets[s + 1]);
                    if lo == hi {
                        continue;
                    }
                    match agg {
                        Reduce::Sum | Reduce::Mean => {
                            let w = if *agg == Reduce::Mean { 1.0 / (hi - lo) as f64 } else { 1.0 };
                            for r in lo..hi {
                                for (dd, gg) in d.row_mut(r).iter_mut().zip(g.row(s)) {
                                    *dd += w * gg;
                                }
                            }
                        }
                        Reduce::Max => {
                            for c in 0..cols {
                                let r = argmax[s * cols + c];
                                let cur = d.get(r, c);
                                d.set(r, c, cur + g.get(s, c));
                            }
                        }
                    }
                }
                send(*x, d);
            }
            Op::SegmentSoftmax(x, offsets) => {
                let y = node.value.as_slice();
                let mut d = DenseMatrix::zeros(y.len(), 1);
                for s in 0..offsets.len() - 1 {
                    let span = offsets[s]..offsets[s + 1];
                    softmax_backward(&y[span.clone()], &g.as_slice()[span.clone()], &mut d.as_mut_slice()[span]);
                }
                send(*x, d);
            }
            Op::Sum(x) => {
                let (rows, cols) = self.shape(*x);
                send(*x, DenseMatrix::filled(rows, cols, g.get(0, 0)));
            }
            Op::CrossEntropy(logits, labels) => {
                let src = self.value(*logits);
                let n = src.rows().max(1) as f64;
                let scale = g.get(0, 0) / n;
                let mut d = src.clone();
                for (r, &label) in labels.iter().enumerate() {
                    let row = d.row_mut(r);
                    softmax_in_place(row);
                    row[label] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                send(*logits, d);
            }
        }
    }
}

fn check_offsets(offsets: &[usize], rows: usize) -> Result<()> {
    let ok = offsets.first() == Some(&0)
        && offsets.last() == Some(&rows)
        && offsets.windows(2).all(|w| w[0] <= w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "segment offsets do not partition {rows} rows"
        )))
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(row: &mut [f64]) {
    if row.is_empty() {
        return;
    }
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

fn softmax_backward(y: &[f64], g: &[f64], out: &mut [f64]) {
    let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
    for ((o, yy), gg) in out.iter_mut().zip(y).zip(g) {
        *o = yy * (gg - dot);
    }
}

/// Compares analytic gradients with central differences of step `h`.
///
/// `loss` records a scalar loss on a fresh tape from the current parameter
/// values. Every parameter entry is checked, or a seeded 5% sample when the
/// store holds more than 10,000 scalars. Returns the largest
/// `|analytic - numeric| / max(1e-6, |analytic| + |numeric|)`. Below the
/// floor, central differences at `h = 1e-5` are dominated by rounding, so
/// such entries are held to an absolute bound instead.
pub fn grad_check<F>(store: &mut ParamStore, h: f64, mut loss: F) -> Result<f64>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let out = loss(&mut tape, store)?;
    tape.backward(out, store)?;
    let analytic: Vec<Vec<f64>> = store.iter().map(|p| p.grad.as_slice().to_vec()).collect();

    let mut entries: Vec<(usize, usize)> = Vec::new();
    for (pi, p) in store.iter().enumerate() {
        entries.extend((0..p.value.len()).map(|k| (pi, k)));
    }
    if entries.len() > 10_000 {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let keep = entries.len().div_ceil(20);
        let mut picked: Vec<usize> = sample(&mut rng, entries.len(), keep).into_vec();
        picked.sort_unstable();
        entries = picked.into_iter().map(|i| entries[i]).collect();
    }

    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let out = loss(&mut tape, store)?;
        Ok(tape.value(out).get(0, 0))
    };
    let mut worst: f64 = 0.0;
    for (pi, k) in entries {
        let id = ParamId(pi);
        let original = store.get(id).value.as_slice()[k];
        store.get_mut(id).value.as_mut_slice()[k] = original + h;
        let plus = eval(store)?;
        store.get_mut(id).value.as_mut_slice()[k] = original - h;
        let minus = eval(store)?;
        store.get_mut(id).value.as_mut_slice()[k] = original;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[pi][k];
        let err = (a - numeric).abs() / f64::max(1e-6, a.abs() + numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DenseMatrix {
        DenseMatrix::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn activations_on_scalars() {
        let mut t = Tape::new();
        let x = t.constant(m(1, 2, &[-1.0, 2.0]));
        let r = t.relu(x);
        assert_eq!(t.value(r).as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut t = Tape::new();
        let x = t.constant(DenseMatrix::filled(2, 4, 3.0));
        let s = t.softmax_rows(x);
        assert!(t.value(s).as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn group_mean_and_empty_group() {
        let mut t = Tape::new();
        let x = t.constant(m(3, 1, &[2.0, 4.0, 6.0]));
        let g = t.group_reduce(x, &[vec![0, 1], vec![2]], Reduce::Mean).unwrap();
        assert_eq!(t.value(g).as_slice(), &[3.0, 6.0]);
        assert_eq!(t.empty_groups(), 0);
        let e = t.group_reduce(x, &[vec![], vec![1]], Reduce::Max).unwrap();
        assert_eq!(t.value(e).as_slice(), &[0.0, 4.0]);
        assert_eq!(t.empty_groups(), 1);
    }

    #[test]
    fn spmm_on_incidence_transpose() {
        // edges ab, ac, bc of a triangle; nodes carry ones
        let b1 = Csr::from_dense(3, 3, &[-1.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 1.0]);
        let mut t = Tape::new();
        let ones = t.constant(DenseMatrix::filled(3, 1, 1.0));
        let y = t.spmm(Arc::new(b1.transpose()), ones).unwrap();
        assert_eq!(t.value(y).as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let mut t = Tape::new();
        let a = t.constant(DenseMatrix::zeros(2, 3));
        let b = t.constant(DenseMatrix::zeros(4, 2));
        assert!(t.matmul(a, b).is_err());
    }

    #[test]
    fn sum_of_product_gradient_is_input() {
        let mut store = ParamStore::new();
        let w = store.insert("w", m(1, 3, &[0.5, -1.0, 2.0])).unwrap();
        let x = m(3, 1, &[1.0, 2.0, 3.0]);
        let mut t = Tape::new();
        let wv = t.param(&store, w);
        let xv = t.constant(x.clone());
        let y = t.matmul(wv, xv).unwrap();
        let loss = t.sum(y);
        t.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(w).grad.as_slice(), x.as_slice());
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut store = ParamStore::new();
        let w = store.insert("w", m(1, 1, &[3.0])).unwrap();
        let mut t = Tape::new();
        let _ = t.param(&store, w);
        let c = t.constant(m(1, 1, &[5.0]));
        t.backward(c, &mut store).unwrap();
        assert_eq!(store.get(w).grad.as_slice(), &[0.0]);
    }

    #[test]
    fn grad_check_quadratic_and_zero() {
        let mut store = ParamStore::new();
        store.insert("w", m(2, 2, &[0.3, -0.7, 1.1, 0.2])).unwrap();
        let err = grad_check(&mut store, 1e-5, |t, s| {
            let w = t.param(s, s.id("w")?);
            let sq = t.hadamard(w, w)?;
            Ok(t.sum(sq))
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
        let zero = grad_check(&mut store, 1e-5, |t, _| Ok(t.constant(DenseMatrix::zeros(1, 1)))).unwrap();
        assert_eq!(zero, 0.0);
    }
}
