//! Reverse-mode differentiation over a small fixed set of matrix operations,
//! plus the parameter store, optimizers and checkpoints used for training.
//!
//! Tensors are row-major `rows x cols` matrices. Node signals are `N x d`
//! (one column per channel), so per-channel scalars are `1 x d` rows that
//! broadcast down the columns.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "tensor {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    /// Builds an `N x d` tensor from `d` columns of length `N`.
    pub fn from_columns(cols: &[&[f64]]) -> Result<Self> {
        let d = cols.len();
        let n = cols.first().map_or(0, |c| c.len());
        if cols.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("columns differ in length"));
        }
        let mut t = Self::zeros(n, d);
        for (j, c) in cols.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                t.data[i * d + j] = *v;
            }
        }
        Ok(t)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// The single entry of a `1 x 1` tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

/// `P a` on every column of a row-major `N x c` tensor.
fn sparse_times(p: &SparseMatrix, a: &Tensor) -> Tensor {
    let c = a.cols;
    let mut out = Tensor::zeros(a.rows, c);
    for i in 0..p.dim() {
        let dst = &mut out.data[i * c..(i + 1) * c];
        for (j, v) in p.row(i) {
            for (o, x) in dst.iter_mut().zip(&a.data[j * c..(j + 1) * c]) {
                *o += v * x;
            }
        }
    }
    out
}

fn sparse_tr_times(p: &SparseMatrix, g: &Tensor) -> Tensor {
    let c = g.cols;
    let mut out = Tensor::zeros(g.rows, c);
    for i in 0..p.dim() {
        let src = &g.data[i * c..(i + 1) * c];
        for (j, v) in p.row(i) {
            for (o, x) in out.data[j * c..(j + 1) * c].iter_mut().zip(src) {
                *o += v * x;
            }
        }
    }
    out
}

fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let dst = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let x = a.data[i * a.cols + k];
            if x == 0.0 {
                continue;
            }
            for (o, w) in dst.iter_mut().zip(b.row(k)) {
                *o += x * w;
            }
        }
    }
    out
}

/// `a^T b`.
fn tr_matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(a.cols, b.cols);
    for r in 0..a.rows {
        let brow = b.row(r);
        for k in 0..a.cols {
            let x = a.data[r * a.cols + k];
            if x == 0.0 {
                continue;
            }
            for (o, w) in out.data[k * b.cols..(k + 1) * b.cols].iter_mut().zip(brow) {
                *o += x * w;
            }
        }
    }
    out
}

/// `a b^T`.
fn matmul_tr(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        for j in 0..b.rows {
            out.data[i * b.rows + j] = a.row(i).iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Index of a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

enum Op<'g> {
    Leaf(Option<ParamId>),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Hadamard(Var, Var),
    MulRow(Var, Var),
    DivRow(Var, Var),
    ColDot(Var, Var),
    ColNorm(Var),
    Dot(Var, Var),
    Norm(Var),
    ClampFloor(Var),
    Spmv(&'g SparseMatrix, Var),
    Affine(Var, Var, Var),
    Relu(Var),
    Dropout(Var, Vec<f64>),
    SoftmaxCe { logits: Var, probs: Tensor, targets: Vec<(usize, usize)> },
    Mse(Var, Tensor),
    Sum(Var),
    TakeRow(Var, usize),
}

struct Node<'g> {
    value: Tensor,
    op: Op<'g>,
}

/// Append-only computation record. Build one per step; [`Tape::backward`]
/// returns parameter gradients.
pub struct Tape<'g> {
    nodes: Vec<Node<'g>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::invalid(format!("{op}: incompatible shapes {}x{} and {}x{}", a.0, a.1, b.0, b.1))
}

impl<'g> Tape<'g> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
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

    fn push(&mut self, value: Tensor, op: Op<'g>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf(None))
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Leaf(Some(id)))
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn row_shape(&self, op: &str, a: Var, s: Var) -> Result<()> {
        let (sa, ss) = (self.shape(a), self.shape(s));
        if ss != (1, sa.1) {
            return Err(shape_err(op, sa, ss));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| c * x);
        self.push(v, Op::Scale(a, c))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        Ok(self.push(v, Op::Hadamard(a, b)))
    }

    /// Multiplies column `j` of `a` by `s[0, j]`.
    pub fn scale_cols(&mut self, a: Var, s: Var) -> Result<Var> {
        self.row_shape("scale_cols", a, s)?;
        let (av, sv) = (self.value(a), self.value(s));
        let c = av.cols;
        let data = av.data.iter().enumerate().map(|(i, x)| x * sv.data[i % c]).collect();
        let v = Tensor { rows: av.rows, cols: c, data };
        Ok(self.push(v, Op::MulRow(a, s)))
    }

    /// Divides column `j` of `a` by `s[0, j]`.
    pub fn div_cols(&mut self, a: Var, s: Var) -> Result<Var> {
        self.row_shape("div_cols", a, s)?;
        let (av, sv) = (self.value(a), self.value(s));
        let c = av.cols;
        let data = av.data.iter().enumerate().map(|(i, x)| x / sv.data[i % c]).collect();
        let v = Tensor { rows: av.rows, cols: c, data };
        Ok(self.push(v, Op::DivRow(a, s)))
    }

    /// Column-wise inner products, `1 x c`.
    pub fn col_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("col_dot", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let c = av.cols;
        let mut out = Tensor::zeros(1, c);
        for (i, (x, y)) in av.data.iter().zip(&bv.data).enumerate() {
            out.data[i % c] += x * y;
        }
        Ok(self.push(out, Op::ColDot(a, b)))
    }

    /// Column-wise Euclidean norms, `1 x c`.
    pub fn col_norm(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let c = av.cols;
        let mut out = Tensor::zeros(1, c);
        for (i, x) in av.data.iter().enumerate() {
            out.data[i % c] += x * x;
        }
        for v in out.data.iter_mut() {
            *v = v.sqrt();
        }
        self.push(out, Op::ColNorm(a))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("dot", a, b)?;
        let s = self.value(a).data.iter().zip(&self.value(b).data).map(|(x, y)| x * y).sum();
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b)))
    }

    pub fn norm(&mut self, a: Var) -> Var {
        let s = self.value(a).norm();
        self.push(Tensor::scalar(s), Op::Norm(a))
    }

    /// `max(a, floor)` with the gradient passed through unchanged.
    pub fn clamp_floor(&mut self, a: Var, floor: f64) -> Var {
        let v = self.value(a).map(|x| x.max(floor));
        self.push(v, Op::ClampFloor(a))
    }

    /// `P a` for a constant sparse `P`.
    pub fn spmv_const(&mut self, p: &'g SparseMatrix, a: Var) -> Result<Var> {
        if self.shape(a).0 != p.dim() {
            return Err(shape_err("spmv", (p.dim(), p.dim()), self.shape(a)));
        }
        let v = sparse_times(p, self.value(a));
        Ok(self.push(v, Op::Spmv(p, a)))
    }

    /// `x W + b` with `b` a `1 x out` row.
    pub fn dense_affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.1 != sw.0 {
            return Err(shape_err("dense_affine", sx, sw));
        }
        if sb != (1, sw.1) {
            return Err(shape_err("dense_affine bias", sw, sb));
        }
        let mut v = matmul(self.value(x), self.value(w));
        let bias = &self.value(b).data;
        for r in 0..v.rows {
            for (o, bb) in v.data[r * sw.1..(r + 1) * sw.1].iter_mut().zip(bias) {
                *o += bb;
            }
        }
        Ok(self.push(v, Op::Affine(x, w, b)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    /// Inverted dropout: entries are zeroed with probability `rate` and the
    /// survivors scaled by `1 / (1 - rate)`.
    pub fn dropout<R: Rng>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(a).data.len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mut v = self.value(a).clone();
        for (x, m) in v.data.iter_mut().zip(&mask) {
            *x *= m;
        }
        Ok(self.push(v, Op::Dropout(a, mask)))
    }

    /// Mean cross-entropy of the row-wise softmax of `logits` over the given
    /// rows.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize], rows: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let c = lv.cols;
        if labels.len() != lv.rows {
            return Err(Error::invalid("one label per row required"));
        }
        if rows.is_empty() {
            return Err(Error::invalid("cross-entropy over an empty row set"));
        }
        let mut probs = Tensor::zeros(lv.rows, c);
        let mut targets = Vec::with_capacity(rows.len());
        let mut loss = 0.0;
        for &r in rows {
            let y = *labels
                .get(r)
                .ok_or_else(|| Error::invalid(format!("row {r} out of range")))?;
            if y >= c {
                return Err(Error::invalid(format!("label {y} but only {c} classes")));
            }
            let row = lv.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            for (k, v) in row.iter().enumerate() {
                probs.data[r * c + k] = (v - m).exp() / z;
            }
            loss += z.ln() + m - row[y];
            targets.push((r, y));
        }
        loss /= rows.len() as f64;
        Ok(self.push(Tensor::scalar(loss), Op::SoftmaxCe { logits, probs, targets }))
    }

    /// `0.5 * ||a - target||^2`.
    pub fn mse(&mut self, a: Var, target: &Tensor) -> Result<Var> {
        if self.shape(a) != target.shape() {
            return Err(shape_err("mse", self.shape(a), target.shape()));
        }
        let s = 0.5
            * self
                .value(a)
                .data
                .iter()
                .zip(&target.data)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
        Ok(self.push(Tensor::scalar(s), Op::Mse(a, target.clone())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Row `k` of `a` as a `1 x cols` tensor.
    pub fn take_row(&mut self, a: Var, k: usize) -> Result<Var> {
        let (r, _) = self.shape(a);
        if k >= r {
            return Err(Error::invalid(format!("row {k} out of range for {r} rows")));
        }
        let av = self.value(a);
        let v = Tensor::from_vec(1, av.cols, av.row(k).to_vec())?;
        Ok(self.push(v, Op::TakeRow(a, k)))
    }

    /// Gradients of the scalar `loss` with respect to every parameter of
    /// `store` (zeros for parameters not on the tape).
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::invalid("backward needs a scalar loss"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::zeros_like(store);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
                Some(e) => e.add_assign(&t),
                slot => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf(Some(id)) => out.0[id.0].add_assign(&g),
                Op::Leaf(None) => {}
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|x| -x));
                    acc(*a, g);
                }
                Op::Scale(a, c) => acc(*a, g.map(|x| c * x)),
                Op::Hadamard(a, b) => {
                    acc(*a, g.zip(self.value(*b), |x, y| x * y));
                    acc(*b, g.zip(self.value(*a), |x, y| x * y));
                }
                Op::MulRow(a, s) => {
                    let (av, sv) = (self.value(*a), self.value(*s));
                    let c = av.cols;
                    let mut ga = g.clone();
                    let mut gs = Tensor::zeros(1, c);
                    for (i, gi) in ga.data.iter_mut().enumerate() {
                        gs.data[i % c] += *gi * av.data[i];
                        *gi *= sv.data[i % c];
                    }
                    acc(*a, ga);
                    acc(*s, gs);
                }
                Op::DivRow(a, s) => {
                    let (av, sv) = (self.value(*a), self.value(*s));
                    let c = av.cols;
                    let mut ga = g.clone();
                    let mut gs = Tensor::zeros(1, c);
                    for (i, gi) in ga.data.iter_mut().enumerate() {
                        let sj = sv.data[i % c];
                        gs.data[i % c] -= *gi * av.data[i] / (sj * sj);
                        *gi /= sj;
                    }
                    acc(*a, ga);
                    acc(*s, gs);
                }
                Op::ColDot(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let c = av.cols;
                    let ga = Tensor {
                        rows: av.rows,
                        cols: c,
                        data: bv.data.iter().enumerate().map(|(i, y)| g.data[i % c] * y).collect(),
                    };
                    let gb = Tensor {
                        rows: av.rows,
                        cols: c,
                        data: av.data.iter().enumerate().map(|(i, x)| g.data[i % c] * x).collect(),
                    };
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::ColNorm(a) => {
                    let av = self.value(*a);
                    let c = av.cols;
                    let nv = &node.value.data;
                    let data = av
                        .data
                        .iter()
                        .enumerate()
                        .map(|(i, x)| if nv[i % c] > 0.0 { g.data[i % c] * x / nv[i % c] } else { 0.0 })
                        .collect();
                    acc(*a, Tensor { rows: av.rows, cols: c, data });
                }
                Op::Dot(a, b) => {
                    let s = g.item();
                    acc(*a, self.value(*b).map(|y| s * y));
                    acc(*b, self.value(*a).map(|x| s * x));
                }
                Op::Norm(a) => {
                    let n = node.value.item();
                    let s = g.item();
                    let ga = if n > 0.0 {
                        self.value(*a).map(|x| s * x / n)
                    } else {
                        Tensor::zeros(self.shape(*a).0, self.shape(*a).1)
                    };
                    acc(*a, ga);
                }
                Op::ClampFloor(a) => acc(*a, g),
                Op::Spmv(p, a) => acc(*a, sparse_tr_times(p, &g)),
                Op::Affine(x, w, b) => {
                    acc(*x, matmul_tr(&g, self.value(*w)));
                    acc(*w, tr_matmul(self.value(*x), &g));
                    let mut gb = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, v) in gb.data.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(*b, gb);
                }
                Op::Relu(a) => acc(*a, g.zip(self.value(*a), |gi, x| if x > 0.0 { gi } else { 0.0 })),
                Op::Dropout(a, mask) => {
                    let mut ga = g;
                    for (x, m) in ga.data.iter_mut().zip(mask) {
                        *x *= m;
                    }
                    acc(*a, ga);
                }
                Op::SoftmaxCe { logits, probs, targets } => {
                    let s = g.item() / targets.len() as f64;
                    let c = probs.cols;
                    let mut gl = Tensor::zeros(probs.rows, c);
                    for &(r, y) in targets {
                        for k in 0..c {
                            gl.data[r * c + k] += s * probs.data[r * c + k];
                        }
                        gl.data[r * c + y] -= s;
                    }
                    acc(*logits, gl);
                }
                Op::Mse(a, target) => {
                    let s = g.item();
                    acc(*a, self.value(*a).zip(target, |x, y| s * (x - y)));
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    acc(*a, Tensor::filled(r, c, g.item()));
                }
                Op::TakeRow(a, k) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    ga.data[k * c..(k + 1) * c].copy_from_slice(&g.data);
                    acc(*a, ga);
                }
            }
        }
        Ok(out)
    }
}

/// Gradients indexed like the parameters of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self(store.values.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect())
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.0[id.0]
    }

    /// Euclidean norm over all parameters.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|t| t.data.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
    }
}

/// Named trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(self.id(name).is_none(), "duplicate parameter {name}");
        self.names.push(name.to_string());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total number of scalar parameters.
    pub fn size(&self) -> usize {
        self.values.iter().map(|t| t.data.len()).sum()
    }
}

/// Glorot-uniform initialized `fan_in x fan_out` weights.
pub fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect();
    Tensor {
        rows: fan_in,
        cols: fan_out,
        data,
    }
}

/// Central-difference gradient check. `f` evaluates the loss and its tape
/// gradients at the given parameters. Returns the worst relative error
/// `|fd - ad| / max(|fd|, |ad|, 1e-2 * max|ad|, 1e-12)` over all
/// coordinates.
pub fn grad_check<F>(store: &ParamStore, mut f: F) -> Result<f64>
where
    F: FnMut(&ParamStore) -> Result<(f64, Gradients)>,
{
    let (loss, grads) = f(store)?;
    if !loss.is_finite() {
        return Err(Error::Numerical("loss is not finite".into()));
    }
    let floor = 1e-2 * grads.0.iter().map(Tensor::max_abs).fold(0.0, f64::max);
    let mut work = store.clone();
    let mut worst = 0.0f64;
    for p in 0..store.len() {
        for i in 0..store.values[p].data.len() {
            let theta = store.values[p].data[i];
            let h = 1e-5 * theta.abs().max(1.0);
            work.values[p].data[i] = theta + h;
            let (up, _) = f(&work)?;
            work.values[p].data[i] = theta - h;
            let (down, _) = f(&work)?;
            work.values[p].data[i] = theta;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Numerical("loss is not finite under perturbation".into()));
            }
            let fd = (up - down) / (2.0 * h);
            let ad = grads.0[p].data[i];
            let denom = fd.abs().max(ad.abs()).max(floor).max(1e-12);
            worst = worst.max((fd - ad).abs() / denom);
        }
    }
    Ok(worst)
}

/// First and second moment estimates for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let z = Gradients::zeros_like(store).0;
        Self {
            m: z.clone(),
            v: z,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam with L2 weight decay added to the gradient.
pub fn adam_step(store: &mut ParamStore, grads: &Gradients, state: &mut AdamState, lr: f64, weight_decay: f64) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for p in 0..store.values.len() {
        let theta = &mut store.values[p].data;
        let (m, v) = (&mut state.m[p].data, &mut state.v[p].data);
        for i in 0..theta.len() {
            let g = grads.0[p].data[i] + weight_decay * theta[i];
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
            theta[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Plain gradient descent with L2 weight decay.
pub fn sgd_step(store: &mut ParamStore, grads: &Gradients, lr: f64, weight_decay: f64) {
    for (theta, g) in store.values.iter_mut().zip(&grads.0) {
        for (t, gi) in theta.data.iter_mut().zip(&g.data) {
            *t -= lr * (gi + weight_decay * *t);
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    schema_version: u32,
    params: Vec<CheckpointEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointEntry {
    name: String,
    rows: usize,
    cols: usize,
}

/// Writes an 8-byte little-endian header length, a JSON header naming each
/// parameter and its shape, then the raw little-endian values in order.
pub fn save_checkpoint(store: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = CheckpointHeader {
        schema_version: 1,
        params: store
            .iter()
            .map(|(name, t)| CheckpointEntry {
                name: name.to_string(),
                rows: t.rows,
                cols: t.cols,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for (_, t) in store.iter() {
        for v in &t.data {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamStore> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(io)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json).map_err(io)?;
    let header: CheckpointHeader =
        serde_json::from_slice(&json).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut store = ParamStore::new();
    let mut buf = [0u8; 8];
    for entry in header.params {
        let mut data = Vec::with_capacity(entry.rows * entry.cols);
        for _ in 0..entry.rows * entry.cols {
            r.read_exact(&mut buf).map_err(io)?;
            data.push(f64::from_le_bytes(buf));
        }
        store.add(&entry.name, Tensor::from_vec(entry.rows, entry.cols, data)?);
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalized_adjacency, path_graph, IsolatedNodes};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn norm_gradient() {
        let mut store = ParamStore::new();
        let x = store.add("x", t(2, 1, &[3.0, 4.0]));
        let mut tape = Tape::new();
        let v = tape.param(&store, x);
        let n = tape.norm(v);
        assert_eq!(tape.value(n).item(), 5.0);
        let g = tape.backward(n, &store).unwrap();
        assert_eq!(g.get(x).data(), &[0.6, 0.8]);

        let mut store = ParamStore::new();
        let x = store.add("x", t(2, 1, &[0.0, 0.0]));
        let mut tape = Tape::new();
        let v = tape.param(&store, x);
        let n = tape.norm(v);
        assert_eq!(tape.backward(n, &store).unwrap().get(x).data(), &[0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(3, 2));
        assert!(matches!(tape.add(a, b), Err(Error::InvalidArgument(_))));
        let s = tape.constant(Tensor::zeros(1, 2));
        assert!(tape.scale_cols(a, s).is_err());
        let nl = tape.norm(a);
        assert!(tape.backward(a, &ParamStore::new()).is_err());
        assert!(tape.backward(nl, &ParamStore::new()).is_ok());
    }

    #[test]
    fn clamp_passes_gradient_through() {
        let mut store = ParamStore::new();
        let x = store.add("x", t(1, 2, &[1e-4, 3.0]));
        let mut tape = Tape::new();
        let v = tape.param(&store, x);
        let c = tape.clamp_floor(v, 1e-2);
        assert_eq!(tape.value(c).data(), &[1e-2, 3.0]);
        let s = tape.sum(c);
        assert_eq!(tape.backward(s, &store).unwrap().get(x).data(), &[1.0, 1.0]);
    }

    #[test]
    fn quadratic_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = glorot(6, 4, &mut rng);
        let b = Tensor::from_vec(6, 1, (0..6).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        let mut store = ParamStore::new();
        let th = store.add("theta", glorot(4, 1, &mut rng));
        let err = grad_check(&store, |s| {
            let mut tape = Tape::new();
            let w = tape.constant(a.clone());
            let x = tape.param(s, th);
            let zero = tape.constant(Tensor::zeros(1, 1));
            let y = tape.dense_affine(w, x, zero)?;
            let l = tape.mse(y, &b)?;
            Ok((tape.value(l).item(), tape.backward(l, s)?))
        })
        .unwrap();
        assert!(err <= 1e-7, "{err}");
    }

    #[test]
    fn every_op_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = normalized_adjacency(&path_graph(5).unwrap(), IsolatedNodes::Reject).unwrap();
        let mut store = ParamStore::new();
        let x = store.add("x", glorot(5, 3, &mut rng));
        let w = store.add("w", glorot(3, 4, &mut rng));
        let b = store.add("b", glorot(1, 4, &mut rng));
        let s = store.add("s", Tensor::from_vec(1, 3, vec![0.7, 1.3, 0.4]).unwrap());
        let labels = vec![0, 3, 1, 2, 1];
        let err = grad_check(&store, |st| {
            let mut drng = ChaCha8Rng::seed_from_u64(9);
            let mut tape = Tape::new();
            let xv = tape.param(st, x);
            let sv = tape.param(st, s);
            let sc = tape.clamp_floor(sv, 1e-2);
            let px = tape.spmv_const(&p, xv)?;
            let a = tape.scale_cols(px, sc)?;
            let d = tape.div_cols(xv, sc)?;
            let h = tape.hadamard(a, d)?;
            let cd = tape.col_dot(h, xv)?;
            let cn = tape.col_norm(px);
            let e = tape.sub(cd, cn)?;
            let r0 = tape.take_row(xv, 2)?;
            let e = tape.add(e, r0)?;
            let e = tape.scale(e, 0.5);
            let sum_row = tape.sum(e);
            let h = tape.dropout(h, 0.3, &mut drng)?;
            let (wv, bv) = (tape.param(st, w), tape.param(st, b));
            let hw = tape.dense_affine(h, wv, bv)?;
            let hw = tape.relu(hw);
            let ce = tape.softmax_cross_entropy(hw, &labels, &[0, 1, 3])?;
            let q = tape.dot(xv, px)?;
            let n = tape.norm(a);
            let tot = tape.add(ce, q)?;
            let tot = tape.add(tot, n)?;
            let tot = tape.add(tot, sum_row)?;
            Ok((tape.value(tot).item(), tape.backward(tot, st)?))
        })
        .unwrap();
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new();
        let a = tape.constant(t(1, 3, &[1.0, 2.0, 3.0]));
        let d = tape.dropout(a, 0.0, &mut rng).unwrap();
        assert_eq!(tape.value(d).data(), &[1.0, 2.0, 3.0]);
        assert!(tape.dropout(a, 1.0, &mut rng).is_err());
    }

    #[test]
    fn dropout_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = [0.5, -2.0, 1.0];
        let rate = 0.4;
        let draws = 10_000;
        let mut sum = [0.0; 3];
        for _ in 0..draws {
            let mut tape = Tape::new();
            let a = tape.constant(t(1, 3, &x));
            let d = tape.dropout(a, rate, &mut rng).unwrap();
            for (s, v) in sum.iter_mut().zip(tape.value(d).data()) {
                *s += v;
            }
        }
        for (s, xi) in sum.iter().zip(x) {
            let mean = s / draws as f64;
            // per-draw std of x * mask is |x| sqrt(rate / (1 - rate))
            let sigma = xi.abs() * (rate / (1.0 - rate)).sqrt() / (draws as f64).sqrt();
            assert!((mean - xi).abs() <= 3.0 * sigma, "{mean} vs {xi}");
        }
    }

    #[test]
    fn adam_examples() {
        let mut store = ParamStore::new();
        let id = store.add("x", t(1, 2, &[1.0, -2.0]));
        let mut st = AdamState::new(&store);
        let zero = Gradients::zeros_like(&store);
        adam_step(&mut store, &zero, &mut st, 0.1, 0.0);
        assert_eq!(store.get(id).data(), &[1.0, -2.0]);

        let mut g = Gradients::zeros_like(&store);
        g.0[0] = t(1, 2, &[0.3, -5.0]);
        let mut st = AdamState::new(&store);
        adam_step(&mut store, &g, &mut st, 0.1, 0.0);
        assert!((store.get(id).get(0, 0) - 0.9).abs() < 1e-6);
        assert!((store.get(id).get(0, 1) + 1.9).abs() < 1e-6);
    }

    #[test]
    fn adam_converges_on_scalar_quadratic() {
        // f = 0.5 (x - 3)^2
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::scalar(-1.0));
        let mut st = AdamState::new(&store);
        for _ in 0..500 {
            let x = store.get(id).item();
            let g = Gradients(vec![Tensor::scalar(x - 3.0)]);
            adam_step(&mut store, &g, &mut st, 0.1, 0.0);
        }
        assert!((store.get(id).item() - 3.0).abs() <= 1e-3);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        store.add("alpha", glorot(3, 2, &mut rng));
        store.add("w0", glorot(4, 5, &mut rng));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_checkpoint(&store, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), store);
    }
}
