//! Polynomial filtering of multichannel graph signals.
//!
//! All filters compute, per channel `l`, `z = sum_k alpha[l][k] v_k` where
//! `v_k = g_k(P) x` is produced by a three-term recurrence on vectors:
//!
//! * [`favard_filtering`]: learnable orthonormal recurrence coefficients,
//! * [`optbasis_filtering`]: the optimal basis, obtained by orthonormalizing
//!   `P v_k` against `v_k` and `v_{k-1}` only ([`next_basis_vector`]),
//! * [`full_gs_filtering`]: the same basis orthogonalized against every
//!   previous vector (reference path),
//! * [`fixed_basis_filtering`]: classical bases and Bernstein.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::{named_recurrence, BasisKind, RecurrenceCoefficients};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::SparseMatrix;

/// Norm floor used when normalizing optimal-basis vectors.
pub const NORM_CLAMP: f64 = 1e-8;
/// Floor applied to learnable `sqrt_beta` coefficients at read time.
pub const SQRT_BETA_CLAMP: f64 = 1e-2;
/// Residual norms at or below this mark the end of the Krylov space.
pub const KRYLOV_TOL: f64 = 1e-6;

/// `N x d` node signals stored column-major (one contiguous column per
/// channel).
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl SignalMatrix {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            data: vec![0.0; n * d],
        }
    }

    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let d = columns.len();
        if d == 0 {
            return Err(Error::invalid("signal needs at least one channel"));
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("channels differ in length"));
        }
        let data = columns.concat();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite signal entry".into()));
        }
        Ok(Self { n, d, data })
    }

    pub fn from_column_major(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::invalid("signal data length mismatch"));
        }
        Ok(Self { n, d, data })
    }

    pub fn from_vector(x: Vec<f64>) -> Self {
        Self {
            n: x.len(),
            d: 1,
            data: x,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn channels(&self) -> usize {
        self.d
    }

    pub fn column(&self, l: usize) -> &[f64] {
        &self.data[l * self.n..(l + 1) * self.n]
    }

    pub fn column_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.data[l * self.n..(l + 1) * self.n]
    }

    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.data[l * self.n + i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.n, self.d), (other.n, other.d));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Keeps only the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len(), self.d);
        for l in 0..self.d {
            for (r, &i) in rows.iter().enumerate() {
                out.data[l * rows.len() + r] = self.get(i, l);
            }
        }
        out
    }
}

/// Filter coefficients `alpha[l][k]`, one row of `K + 1` values per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    d: usize,
    k1: usize,
    data: Vec<f64>,
}

impl CoefficientMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.len();
        let k1 = rows.first().map_or(0, Vec::len);
        if d == 0 || k1 == 0 || rows.iter().any(|r| r.len() != k1) {
            return Err(Error::invalid("coefficient rows must be non-empty and equally long"));
        }
        let data = rows.concat();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite coefficient".into()));
        }
        Ok(Self { d, k1, data })
    }

    /// The same coefficients on every channel.
    pub fn broadcast(d: usize, alpha: &[f64]) -> Result<Self> {
        Self::from_rows(vec![alpha.to_vec(); d])
    }

    /// `alpha = (1, 0, ..., 0)` on every channel.
    pub fn first_only(d: usize, k: usize) -> Self {
        let mut row = vec![0.0; k + 1];
        row[0] = 1.0;
        Self::broadcast(d, &row).expect("valid shape")
    }

    pub fn channels(&self) -> usize {
        self.d
    }

    /// Polynomial order `K` (rows hold `K + 1` entries).
    pub fn order(&self) -> usize {
        self.k1 - 1
    }

    pub fn get(&self, l: usize, k: usize) -> f64 {
        self.data[l * self.k1 + k]
    }

    pub fn row(&self, l: usize) -> &[f64] {
        &self.data[l * self.k1..(l + 1) * self.k1]
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if (self.d, self.k1) != (other.d, other.k1) {
            return Err(Error::invalid("coefficient shape mismatch"));
        }
        Ok(Self {
            d: self.d,
            k1: self.k1,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }
}

/// Per-channel record of an optimal-basis construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccompanyingRecurrence {
    /// `sqrt_beta[0] = ||x||`, `sqrt_beta[k] = ||v_perp_k||` for `k >= 1`.
    pub sqrt_beta: Vec<f64>,
    /// `gamma[k] = <P v_k, v_k>`.
    pub gamma: Vec<f64>,
    /// `<P v_k, v_{k-1}>` for `k >= 1`; equals `sqrt_beta[k]` in exact
    /// arithmetic.
    pub prev_projection: Vec<f64>,
    /// Number of leading basis vectors inside the Krylov space.
    pub retained: usize,
}

impl AccompanyingRecurrence {
    /// The recurrence defining the accompanying polynomials of the retained
    /// vectors, or `None` for a zero signal.
    pub fn coefficients(&self) -> Option<RecurrenceCoefficients> {
        if self.retained == 0 {
            return None;
        }
        let deg = self.retained - 1;
        RecurrenceCoefficients::new(self.sqrt_beta[..=deg].to_vec(), self.gamma[..deg].to_vec()).ok()
    }

    /// Largest `| ||v_perp_k|| - <P v_k, v_{k-1}> |` over retained steps.
    pub fn residual_gap(&self) -> f64 {
        (1..self.retained.min(self.prev_projection.len() + 1))
            .map(|k| (self.sqrt_beta[k] - self.prev_projection[k - 1]).abs())
            .fold(0.0, f64::max)
    }
}

/// Basis vectors `V[l][k]` of length `N` for `d` channels and orders
/// `0..=K`, optionally with the accompanying recurrence of each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisVectors {
    d: usize,
    k1: usize,
    n: usize,
    data: Vec<f64>,
    recurrences: Vec<AccompanyingRecurrence>,
}

impl BasisVectors {
    pub fn channels(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.k1 - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn vector(&self, l: usize, k: usize) -> &[f64] {
        let start = (l * self.k1 + k) * self.n;
        &self.data[start..start + self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Accompanying recurrences, one per channel (empty for fixed bases).
    pub fn recurrences(&self) -> &[AccompanyingRecurrence] {
        &self.recurrences
    }

    /// Gram matrix `V_l^T V_l` of one channel.
    pub fn gram(&self, l: usize) -> DenseMatrix {
        let mut g = DenseMatrix::zeros(self.k1, self.k1);
        for a in 0..self.k1 {
            for b in a..self.k1 {
                let v = dot(self.vector(l, a), self.vector(l, b));
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        g
    }

    /// Largest `|V^T V - I|` entry over the retained orders of each channel.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for l in 0..self.d {
            let r = self.recurrences.get(l).map_or(self.k1, |rec| rec.retained);
            let g = self.gram(l);
            for a in 0..r {
                for b in 0..r {
                    let want = if a == b { 1.0 } else { 0.0 };
                    worst = worst.max((g[(a, b)] - want).abs());
                }
            }
        }
        worst
    }

    fn from_channels(channels: Vec<Vec<Vec<f64>>>, recurrences: Vec<AccompanyingRecurrence>) -> Self {
        let d = channels.len();
        let k1 = channels[0].len();
        let n = channels[0][0].len();
        let data = channels.into_iter().flatten().flatten().collect();
        Self {
            d,
            k1,
            n,
            data,
            recurrences,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_finite(v: &[f64], channel: usize, order: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "non-finite value in channel {channel} at order {order}"
        )))
    }
}

fn check_shapes(p: &SparseMatrix, x: &SignalMatrix, alpha: &CoefficientMatrix) -> Result<()> {
    if x.n_nodes() != p.dim() {
        return Err(Error::invalid(format!(
            "signal has {} nodes, operator is {}x{}",
            x.n_nodes(),
            p.dim(),
            p.dim()
        )));
    }
    if alpha.channels() != x.channels() {
        return Err(Error::invalid(format!(
            "alpha has {} channels, signal has {}",
            alpha.channels(),
            x.channels()
        )));
    }
    Ok(())
}

fn axpy(z: &mut [f64], a: f64, v: &[f64]) {
    for (zi, vi) in z.iter_mut().zip(v) {
        *zi += a * vi;
    }
}

/// Filtering with learnable orthonormal recurrence coefficients.
///
/// `sqrt_beta` and `gamma` hold one row per channel with at least `K + 1`
/// and `K` columns; trailing columns are ignored. `sqrt_beta` is floored at
/// [`SQRT_BETA_CLAMP`] when read.
pub fn favard_filtering(
    p: &SparseMatrix,
    x: &SignalMatrix,
    sqrt_beta: &DenseMatrix,
    gamma: &DenseMatrix,
    alpha: &CoefficientMatrix,
) -> Result<SignalMatrix> {
    check_shapes(p, x, alpha)?;
    let k = alpha.order();
    let d = x.channels();
    if sqrt_beta.rows() != d || gamma.rows() != d || sqrt_beta.cols() < k + 1 || gamma.cols() < k {
        return Err(Error::invalid(format!(
            "recurrence coefficients {}x{} / {}x{} too small for {d} channels at order {k}",
            sqrt_beta.rows(),
            sqrt_beta.cols(),
            gamma.rows(),
            gamma.cols()
        )));
    }
    let n = x.n_nodes();
    let mut out = SignalMatrix::zeros(n, d);
    let mut px = vec![0.0; n];
    for l in 0..d {
        let sb = |i: usize| sqrt_beta[(l, i)].max(SQRT_BETA_CLAMP);
        let mut prev = vec![0.0; n];
        let mut cur: Vec<f64> = x.column(l).iter().map(|v| v / sb(0)).collect();
        check_finite(&cur, l, 0)?;
        let z = out.column_mut(l);
        axpy(z, alpha.get(l, 0), &cur);
        for i in 0..k {
            p.spmv_into(&cur, &mut px)?;
            let (g, b, b_next) = (gamma[(l, i)], sb(i), sb(i + 1));
            let next: Vec<f64> = (0..n)
                .map(|j| (px[j] - g * cur[j] - b * prev[j]) / b_next)
                .collect();
            check_finite(&next, l, i + 1)?;
            axpy(z, alpha.get(l, i + 1), &next);
            prev = std::mem::replace(&mut cur, next);
        }
    }
    Ok(out)
}

/// One step of the two-term orthonormalization.
#[derive(Debug, Clone, PartialEq)]
pub struct NextBasis {
    pub vector: Vec<f64>,
    /// `<P v_k, v_k>`.
    pub gamma: f64,
    /// `||v_perp||` before clamping.
    pub sqrt_beta: f64,
    /// `<P v_k, v_{k-1}>`.
    pub prev_projection: f64,
}

/// `v* = P v_k`, `v_perp = v* - <v*, v_k> v_k - <v*, v_{k-1}> v_{k-1}`,
/// `v_{k+1} = v_perp / max(||v_perp||, 1e-8)`.
pub fn next_basis_vector(p: &SparseMatrix, v_k: &[f64], v_km1: &[f64]) -> Result<NextBasis> {
    if v_km1.len() != v_k.len() {
        return Err(Error::invalid("basis vectors differ in length"));
    }
    let mut v = p.spmv(v_k)?;
    let gamma = dot(&v, v_k);
    let prev_projection = dot(&v, v_km1);
    for ((vi, a), b) in v.iter_mut().zip(v_k).zip(v_km1) {
        *vi -= gamma * a + prev_projection * b;
    }
    let sqrt_beta = norm(&v);
    let scale = sqrt_beta.max(NORM_CLAMP);
    for vi in v.iter_mut() {
        *vi /= scale;
    }
    Ok(NextBasis {
        vector: v,
        gamma,
        sqrt_beta,
        prev_projection,
    })
}

fn retained_count(sqrt_beta: &[f64]) -> usize {
    if sqrt_beta[0] <= NORM_CLAMP {
        return 0;
    }
    1 + sqrt_beta[1..].iter().take_while(|&&b| b > KRYLOV_TOL).count()
}

/// Optimal basis vectors of a single channel via the two-term step.
pub fn optbasis_vectors(
    p: &SparseMatrix,
    x: &[f64],
    k: usize,
) -> Result<(Vec<Vec<f64>>, AccompanyingRecurrence)> {
    if x.len() != p.dim() {
        return Err(Error::invalid("signal length does not match operator"));
    }
    let nx = norm(x);
    let v0: Vec<f64> = x.iter().map(|v| v / nx.max(NORM_CLAMP)).collect();
    let mut vectors = vec![v0];
    let mut sqrt_beta = vec![nx];
    let mut gamma = Vec::with_capacity(k);
    let mut prev_projection = Vec::with_capacity(k);
    let zero = vec![0.0; x.len()];
    for i in 0..k {
        let prev = if i == 0 { &zero } else { &vectors[i - 1] };
        let step = next_basis_vector(p, &vectors[i], prev)?;
        gamma.push(step.gamma);
        sqrt_beta.push(step.sqrt_beta);
        if i > 0 {
            prev_projection.push(step.prev_projection);
        }
        vectors.push(step.vector);
    }
    let retained = retained_count(&sqrt_beta);
    Ok((
        vectors,
        AccompanyingRecurrence {
            sqrt_beta,
            gamma,
            prev_projection,
            retained,
        },
    ))
}

/// Reference construction orthogonalizing `P v_k` against every previous
/// vector. Same clamp rule and bookkeeping as [`optbasis_vectors`].
pub fn full_gs_vectors(
    p: &SparseMatrix,
    x: &[f64],
    k: usize,
) -> Result<(Vec<Vec<f64>>, AccompanyingRecurrence)> {
    if x.len() != p.dim() {
        return Err(Error::invalid("signal length does not match operator"));
    }
    let nx = norm(x);
    let mut vectors = vec![x.iter().map(|v| v / nx.max(NORM_CLAMP)).collect::<Vec<_>>()];
    let mut sqrt_beta = vec![nx];
    let mut gamma = Vec::with_capacity(k);
    let mut prev_projection = Vec::with_capacity(k);
    for i in 0..k {
        let mut v = p.spmv(&vectors[i])?;
        let coeffs: Vec<f64> = vectors.iter().map(|u| dot(&v, u)).collect();
        for (u, c) in vectors.iter().zip(&coeffs) {
            axpy(&mut v, -c, u);
        }
        gamma.push(coeffs[i]);
        if i > 0 {
            prev_projection.push(coeffs[i - 1]);
        }
        let nb = norm(&v);
        sqrt_beta.push(nb);
        let scale = nb.max(NORM_CLAMP);
        vectors.push(v.into_iter().map(|e| e / scale).collect());
    }
    let retained = retained_count(&sqrt_beta);
    Ok((
        vectors,
        AccompanyingRecurrence {
            sqrt_beta,
            gamma,
            prev_projection,
            retained,
        },
    ))
}

fn combine_channel(vectors: &[Vec<f64>], alpha: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; vectors[0].len()];
    for (v, &a) in vectors.iter().zip(alpha) {
        axpy(&mut z, a, v);
    }
    z
}

/// Filtering with the optimal basis. Returns the basis vectors and their
/// accompanying recurrences when `keep_vectors` is set.
pub fn optbasis_filtering(
    p: &SparseMatrix,
    x: &SignalMatrix,
    alpha: &CoefficientMatrix,
    keep_vectors: bool,
) -> Result<(SignalMatrix, Option<BasisVectors>)> {
    check_shapes(p, x, alpha)?;
    let k = alpha.order();
    let mut out = SignalMatrix::zeros(x.n_nodes(), x.channels());
    let mut kept = Vec::new();
    let mut recs = Vec::new();
    for l in 0..x.channels() {
        let (vectors, rec) = optbasis_vectors(p, x.column(l), k)?;
        for (i, v) in vectors.iter().enumerate() {
            check_finite(v, l, i)?;
        }
        out.column_mut(l).copy_from_slice(&combine_channel(&vectors, alpha.row(l)));
        if keep_vectors {
            kept.push(vectors);
            recs.push(rec);
        }
    }
    let basis = keep_vectors.then(|| BasisVectors::from_channels(kept, recs));
    Ok((out, basis))
}

/// Single-channel optimal-basis filtering with full Gram-Schmidt.
pub fn full_gs_filtering(
    p: &SparseMatrix,
    x: &[f64],
    alpha: &[f64],
    k: usize,
) -> Result<(Vec<f64>, BasisVectors)> {
    if alpha.len() != k + 1 {
        return Err(Error::invalid(format!("expected {} coefficients, got {}", k + 1, alpha.len())));
    }
    let (vectors, rec) = full_gs_vectors(p, x, k)?;
    for (i, v) in vectors.iter().enumerate() {
        check_finite(v, 0, i)?;
    }
    let z = combine_channel(&vectors, alpha);
    Ok((z, BasisVectors::from_channels(vec![vectors], vec![rec])))
}

/// Basis vectors `g_k(P) x`, `k = 0..=K`, for a fixed basis. Bernstein
/// vectors are `b_k(L) x`.
pub fn fixed_basis_vectors(p: &SparseMatrix, x: &[f64], kind: &BasisKind, k: usize) -> Result<Vec<Vec<f64>>> {
    if x.len() != p.dim() {
        return Err(Error::invalid("signal length does not match operator"));
    }
    match kind {
        BasisKind::OptBasis => Err(Error::invalid("use optbasis_filtering for the optimal basis")),
        BasisKind::Bernstein => {
            // L^j x for every j, then (I + P)^{K-j} applied to each
            let mut lap_powers = vec![x.to_vec()];
            for j in 0..k {
                let prev = &lap_powers[j];
                let px = p.spmv(prev)?;
                lap_powers.push(prev.iter().zip(&px).map(|(a, b)| a - b).collect());
            }
            let scale = 0.5f64.powi(k as i32);
            let mut out = Vec::with_capacity(k + 1);
            for (j, lx) in lap_powers.into_iter().enumerate() {
                let mut v = lx;
                for _ in 0..k - j {
                    let pv = p.spmv(&v)?;
                    for (a, b) in v.iter_mut().zip(&pv) {
                        *a += b;
                    }
                }
                let c = binomial(k, j) * scale;
                out.push(v.into_iter().map(|e| e * c).collect());
            }
            Ok(out)
        }
        _ => {
            let rec = named_recurrence(kind, k)?.expect("recurrence-representable");
            let mut out = vec![x.iter().map(|v| v * rec.p0).collect::<Vec<_>>()];
            let mut prev = vec![0.0; x.len()];
            for i in 0..k {
                let cur = &out[i];
                let pc = p.spmv(cur)?;
                let next: Vec<f64> = (0..x.len())
                    .map(|j| rec.a[i] * pc[j] + rec.b[i] * cur[j] + rec.c[i] * prev[j])
                    .collect();
                prev = cur.clone();
                out.push(next);
            }
            Ok(out)
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Filtering with a fixed classical basis (including Jacobi and Bernstein).
pub fn fixed_basis_filtering(
    p: &SparseMatrix,
    x: &SignalMatrix,
    kind: &BasisKind,
    alpha: &CoefficientMatrix,
) -> Result<SignalMatrix> {
    check_shapes(p, x, alpha)?;
    if matches!(kind, BasisKind::OptBasis | BasisKind::Favard(_)) {
        return Err(Error::invalid(format!(
            "{kind} has a dedicated filtering routine"
        )));
    }
    let k = alpha.order();
    let n = x.n_nodes();
    let mut out = SignalMatrix::zeros(n, x.channels());
    for l in 0..x.channels() {
        let z = if *kind == BasisKind::Bernstein {
            // Horner in (I + P): w_j = (I + P) w_{j-1} + c_j alpha_j L^j x
            let scale = 0.5f64.powi(k as i32);
            let mut lx = x.column(l).to_vec();
            let mut w: Vec<f64> = lx.iter().map(|v| v * scale * alpha.get(l, 0)).collect();
            for j in 1..=k {
                let plx = p.spmv(&lx)?;
                for (a, b) in lx.iter_mut().zip(&plx) {
                    *a -= b;
                }
                let pw = p.spmv(&w)?;
                let c = binomial(k, j) * scale * alpha.get(l, j);
                for i in 0..n {
                    w[i] += pw[i] + c * lx[i];
                }
            }
            w
        } else {
            combine_channel(&fixed_basis_vectors(p, x.column(l), kind, k)?, alpha.row(l))
        };
        check_finite(&z, l, k)?;
        out.column_mut(l).copy_from_slice(&z);
    }
    Ok(out)
}

/// Materializes the optimal basis vectors of every channel without applying
/// coefficients.
pub fn precompute_basis(p: &SparseMatrix, x: &SignalMatrix, k: usize) -> Result<BasisVectors> {
    let alpha = CoefficientMatrix::first_only(x.channels(), k);
    let (_, basis) = optbasis_filtering(p, x, &alpha, true)?;
    Ok(basis.expect("vectors kept"))
}

/// Fixed-basis vectors of every channel, in the same layout.
pub fn precompute_fixed_basis(p: &SparseMatrix, x: &SignalMatrix, kind: &BasisKind, k: usize) -> Result<BasisVectors> {
    let channels = (0..x.channels())
        .map(|l| fixed_basis_vectors(p, x.column(l), kind, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(BasisVectors::from_channels(channels, Vec::new()))
}

fn check_batch(batch: &[usize], n: usize) -> Result<()> {
    match batch.iter().find(|&&i| i >= n) {
        Some(i) => Err(Error::invalid(format!("node id {i} out of range for {n} nodes"))),
        None => Ok(()),
    }
}

/// `Z[i, l] = sum_k alpha[l][k] V[l][k][i]` for the nodes in `batch` (all
/// nodes when `None`).
pub fn combine_precomputed(
    v: &BasisVectors,
    alpha: &CoefficientMatrix,
    batch: Option<&[usize]>,
) -> Result<SignalMatrix> {
    if alpha.channels() != v.d || alpha.order() != v.order() {
        return Err(Error::invalid(format!(
            "alpha is {}x{}, basis is {} channels of order {}",
            alpha.channels(),
            alpha.order() + 1,
            v.d,
            v.order()
        )));
    }
    let all: Vec<usize>;
    let rows = match batch {
        Some(b) => {
            check_batch(b, v.n)?;
            b
        }
        None => {
            all = (0..v.n).collect();
            &all
        }
    };
    let mut out = SignalMatrix::zeros(rows.len(), v.d);
    for l in 0..v.d {
        let z = out.column_mut(l);
        for k in 0..v.k1 {
            let a = alpha.get(l, k);
            let vec = v.vector(l, k);
            for (zi, &i) in z.iter_mut().zip(rows) {
                *zi += a * vec[i];
            }
        }
    }
    Ok(out)
}

/// JSON sidecar describing a basis-vector file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSidecar {
    pub format_version: u32,
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    /// FNV-1a hash of the graph, as a 16-digit hex string.
    pub graph_hash: String,
    pub recurrences: Vec<AccompanyingRecurrence>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `V` as little-endian `f64` blocks (`d` channels, each `(K+1) x N`
/// contiguous) plus a `<path>.json` sidecar.
pub fn write_basis_file(v: &BasisVectors, graph_hash: u64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for x in &v.data {
        w.write_all(&x.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let sidecar = BasisSidecar {
        format_version: 1,
        d: v.d,
        k: v.order(),
        n: v.n,
        graph_hash: format!("{graph_hash:016x}"),
        recurrences: v.recurrences.clone(),
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<BasisSidecar> {
    let side = sidecar_path(path.as_ref());
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", side.display())))
}

/// Reads a whole basis file, verifying its sidecar against `expected_hash`
/// when given.
pub fn read_basis_file(path: impl AsRef<Path>, expected_hash: Option<u64>) -> Result<BasisVectors> {
    let path = path.as_ref();
    let mut file = BasisFile::open(path, expected_hash)?;
    let meta = file.sidecar.clone();
    let mut data = vec![0.0; meta.d * (meta.k + 1) * meta.n];
    let mut buf = vec![0u8; data.len() * 8];
    file.reader.seek(SeekFrom::Start(0)).map_err(|e| Error::io(path, e))?;
    file.reader.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    for (x, chunk) in data.iter_mut().zip(buf.chunks_exact(8)) {
        *x = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
    }
    Ok(BasisVectors {
        d: meta.d,
        k1: meta.k + 1,
        n: meta.n,
        data,
        recurrences: meta.recurrences,
    })
}

/// Handle for batched reads from a basis file without loading it whole.
pub struct BasisFile {
    path: PathBuf,
    reader: BufReader<File>,
    pub sidecar: BasisSidecar,
}

impl BasisFile {
    pub fn open(path: impl AsRef<Path>, expected_hash: Option<u64>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let sidecar = read_sidecar(&path)?;
        if let Some(h) = expected_hash {
            let want = format!("{h:016x}");
            if sidecar.graph_hash != want {
                return Err(Error::Data(format!(
                    "basis file {} was computed for graph {}, current graph is {want}",
                    path.display(),
                    sidecar.graph_hash
                )));
            }
        }
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let expected_len = (sidecar.d * (sidecar.k + 1) * sidecar.n * 8) as u64;
        let len = file.metadata().map_err(|e| Error::io(&path, e))?.len();
        if len != expected_len {
            return Err(Error::Data(format!(
                "basis file {} has {len} bytes, sidecar implies {expected_len}",
                path.display()
            )));
        }
        Ok(Self {
            path,
            reader: BufReader::new(file),
            sidecar,
        })
    }

    /// Same result as [`combine_precomputed`] on the batch, reading only the
    /// needed entries.
    pub fn combine(&mut self, alpha: &CoefficientMatrix, batch: &[usize]) -> Result<SignalMatrix> {
        let (d, k1, n) = (self.sidecar.d, self.sidecar.k + 1, self.sidecar.n);
        if alpha.channels() != d || alpha.order() + 1 != k1 {
            return Err(Error::invalid("alpha shape does not match basis file"));
        }
        check_batch(batch, n)?;
        let mut out = SignalMatrix::zeros(batch.len(), d);
        let mut buf = [0u8; 8];
        for l in 0..d {
            for k in 0..k1 {
                let a = alpha.get(l, k);
                let base = ((l * k1 + k) * n) as u64;
                for (r, &i) in batch.iter().enumerate() {
                    self.reader
                        .seek(SeekFrom::Start((base + i as u64) * 8))
                        .map_err(|e| Error::io(&self.path, e))?;
                    self.reader.read_exact(&mut buf).map_err(|e| Error::io(&self.path, e))?;
                    out.column_mut(l)[r] += a * f64::from_le_bytes(buf);
                }
            }
        }
        Ok(out)
    }
}
