//! Dense eigendecomposition and the explicit optimal-basis pipeline.
//!
//! Everything here is `O(n^3)` and only meant for graphs up to a few
//! thousand nodes. It serves as ground truth: exactly filtered targets,
//! spectral weight measures, Hessians of the coefficient-learning loss and
//! Gauss quadrature for recurrence coefficients.

use crate::basis::RecurrenceCoefficients;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Default upper bound on the matrix size accepted by the eigensolver.
pub const DEFAULT_ORACLE_CAP: usize = 2048;

/// Eigenvalues closer than this are merged into one atom of a measure.
pub const MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct EigConfig {
    pub max_n: usize,
    pub max_sweeps: usize,
    /// Convergence threshold on the off-diagonal Frobenius norm, relative to
    /// the input's Frobenius norm.
    pub rel_tol: f64,
}

impl Default for EigConfig {
    fn default() -> Self {
        Self {
            max_n: DEFAULT_ORACLE_CAP,
            max_sweeps: 100,
            rel_tol: 1e-10,
        }
    }
}

/// Eigenpairs sorted by ascending eigenvalue; column `i` of `vectors` pairs
/// with `values[i]`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `U^T x`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.vectors.tr_matvec(x)
    }

    /// `U diag(d) U^T x`.
    pub fn apply_diagonal(&self, d: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if d.len() != self.dim() {
            return Err(Error::invalid("diagonal length mismatch"));
        }
        let mut coef = self.project(x)?;
        for (c, s) in coef.iter_mut().zip(d) {
            *c *= s;
        }
        self.vectors.matvec(&coef)
    }

    /// `U diag(values) U^T`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.dim();
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = (0..n)
                    .map(|k| self.vectors[(i, k)] * self.values[k] * self.vectors[(j, k)])
                    .sum();
            }
        }
        out
    }
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

pub fn symmetric_eig(m: &DenseMatrix) -> Result<Spectrum> {
    symmetric_eig_with(m, &EigConfig::default())
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps over all `(p, q)` pairs until the off-diagonal norm drops below
/// `rel_tol * ||m||_F`, then runs one polishing sweep.
pub fn symmetric_eig_with(m: &DenseMatrix, cfg: &EigConfig) -> Result<Spectrum> {
    let n = m.rows();
    if !m.is_square() {
        return Err(Error::invalid("eigendecomposition needs a square matrix"));
    }
    if n > cfg.max_n {
        return Err(Error::InvalidArgument(format!(
            "matrix of size {n} exceeds the dense oracle cap of {}",
            cfg.max_n
        )));
    }
    let norm = m.frobenius_norm();
    if m.asymmetry() > 1e-10 * norm.max(1.0) {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (deviation {:e})",
            m.asymmetry()
        )));
    }
    let mut a = m.as_slice().to_vec();
    // rows of `vt` are eigenvectors, so rotations touch contiguous memory
    let mut vt = DenseMatrix::identity(n).as_slice().to_vec();
    let target = cfg.rel_tol * norm;
    let mut polished = false;
    let mut converged = off_diagonal_norm(&a, n) == 0.0;
    let mut sweeps = 0;
    while !converged {
        if sweeps == cfg.max_sweeps {
            return Err(Error::Numerical(format!(
                "Jacobi eigensolver did not converge in {} sweeps (off-diagonal norm {:e})",
                cfg.max_sweeps,
                off_diagonal_norm(&a, n)
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[p * n + k];
                    let akq = a[q * n + k];
                    a[p * n + k] = c * akp - s * akq;
                    a[q * n + k] = s * akp + c * akq;
                }
                for k in 0..n {
                    a[k * n + p] = a[p * n + k];
                    a[k * n + q] = a[q * n + k];
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vp = vt[p * n + k];
                    let vq = vt[q * n + k];
                    vt[p * n + k] = c * vp - s * vq;
                    vt[q * n + k] = s * vp + c * vq;
                }
            }
        }
        let off = off_diagonal_norm(&a, n);
        if off == 0.0 || polished {
            converged = true;
        } else if off <= target {
            polished = true;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, col)] = vt[i * n + r];
        }
    }
    Ok(Spectrum { values, vectors })
}

/// Discrete measure `sum_i w_i delta(mu_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() {
            return Err(Error::invalid("nodes and weights differ in length"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateMeasure("weights must be finite and non-negative".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::DegenerateMeasure("total mass is zero".into()));
        }
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Number of atoms carrying non-negligible weight.
    pub fn support_size(&self) -> usize {
        let floor = 1e-14 * self.total_mass();
        self.weights.iter().filter(|&&w| w > floor).count()
    }

    /// `sum_i w_i f(mu_i) g(mu_i)`.
    pub fn inner<F: Fn(f64) -> f64, G: Fn(f64) -> f64>(&self, f: F, g: G) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x) * g(x))
            .sum()
    }
}

/// Spectral weight measure of signal `x`: atoms at the eigenvalues with
/// weights `(U^T x)_i^2`, merging eigenvalues within [`MERGE_TOL`].
pub fn spectral_weight_measure(s: &Spectrum, x: &[f64]) -> Result<DiscreteMeasure> {
    if x.len() != s.dim() {
        return Err(Error::invalid("signal length does not match spectrum"));
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateMeasure("zero signal".into()));
    }
    let proj = s.project(x)?;
    let mut nodes: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut group_len = 0usize;
    let mut prev = f64::NEG_INFINITY;
    for (&mu, &c) in s.values.iter().zip(&proj) {
        if mu - prev <= MERGE_TOL && !nodes.is_empty() {
            let last = nodes.len() - 1;
            group_len += 1;
            nodes[last] += (mu - nodes[last]) / group_len as f64;
            weights[last] += c * c;
        } else {
            nodes.push(mu);
            weights.push(c * c);
            group_len = 1;
        }
        prev = mu;
    }
    DiscreteMeasure::new(nodes, weights)
}

/// Recurrence coefficients of the polynomials orthonormal under `m`, up to
/// degree `k` (Stieltjes procedure with one reorthogonalization pass).
///
/// Returns `sqrt_beta[0..=k]` and `gamma[0..k]`; `sqrt_beta[0]` is the square
/// root of the total mass.
pub fn gram_schmidt_polynomials(m: &DiscreteMeasure, k: usize) -> Result<RecurrenceCoefficients> {
    let support = m.support_size();
    if support < k + 1 {
        return Err(Error::DegenerateBasis {
            order: support,
            msg: format!("measure has {support} atoms but degree {k} needs {}", k + 1),
        });
    }
    let mu = m.nodes();
    let w = m.weights();
    let dot = |a: &[f64], b: &[f64]| -> f64 { w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum() };

    let mut sqrt_beta = vec![m.total_mass().sqrt()];
    let mut gamma = Vec::with_capacity(k);
    let mut polys: Vec<Vec<f64>> = vec![vec![1.0 / sqrt_beta[0]; mu.len()]];
    for j in 0..k {
        let pj = &polys[j];
        let xp: Vec<f64> = mu.iter().zip(pj).map(|(x, p)| x * p).collect();
        let g = dot(&xp, pj);
        let mut q: Vec<f64> = xp.iter().zip(pj).map(|(a, p)| a - g * p).collect();
        if j > 0 {
            let pm = &polys[j - 1];
            for (qi, pi) in q.iter_mut().zip(pm) {
                *qi -= sqrt_beta[j] * pi;
            }
        }
        for prev in &polys {
            let c = dot(&q, prev);
            for (qi, pi) in q.iter_mut().zip(prev) {
                *qi -= c * pi;
            }
        }
        let nb = dot(&q, &q).sqrt();
        if !(nb > 1e-12 * sqrt_beta[0]) {
            return Err(Error::DegenerateBasis {
                order: j + 1,
                msg: format!("residual norm {nb:e} vanished"),
            });
        }
        gamma.push(g);
        sqrt_beta.push(nb);
        polys.push(q.into_iter().map(|v| v / nb).collect());
    }
    RecurrenceCoefficients::new(sqrt_beta, gamma)
}

/// `H[k1, k2] = sum_i g_k1(mu_i) g_k2(mu_i) (U^T x)_i^2`; `basis_values` has
/// one row per basis polynomial and one column per eigenvalue.
pub fn hessian_matrix(s: &Spectrum, basis_values: &DenseMatrix, x: &[f64]) -> Result<DenseMatrix> {
    if basis_values.cols() != s.dim() || x.len() != s.dim() {
        return Err(Error::invalid(format!(
            "basis values {}x{} / signal {} do not match spectrum of size {}",
            basis_values.rows(),
            basis_values.cols(),
            x.len(),
            s.dim()
        )));
    }
    let w: Vec<f64> = s.project(x)?.into_iter().map(|c| c * c).collect();
    let kk = basis_values.rows();
    let mut h = DenseMatrix::zeros(kk, kk);
    for a in 0..kk {
        for b in a..kk {
            let v: f64 = (0..s.dim())
                .map(|i| basis_values[(a, i)] * basis_values[(b, i)] * w[i])
                .sum();
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    Ok(h)
}

/// Ratio of extreme eigenvalues; infinite when the matrix is numerically
/// singular.
pub fn condition_number(h: &DenseMatrix) -> Result<f64> {
    let spec = symmetric_eig(h)?;
    let lo = spec.values[0];
    let hi = *spec.values.last().expect("non-empty");
    if lo <= 1e-12 * hi.abs() || hi <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(hi / lo)
}

/// `U diag(h(1 - mu_i)) U^T x`: applies the spectral response `h(lambda)`.
pub fn exact_filter<H: Fn(f64) -> f64>(s: &Spectrum, h: H, x: &[f64]) -> Result<Vec<f64>> {
    let d: Vec<f64> = s.values.iter().map(|&mu| h(1.0 - mu)).collect();
    s.apply_diagonal(&d, x)
}

/// Gauss quadrature of the measure whose orthonormal polynomials obey `rc`,
/// built from the `(k+1) x (k+1)` Jacobi operator (Golub-Welsch).
///
/// Needs `gamma[0..=k]` and `sqrt_beta[0..=k]`.
pub fn gauss_quadrature(rc: &RecurrenceCoefficients, k: usize) -> Result<DiscreteMeasure> {
    if rc.gamma().len() < k + 1 {
        return Err(Error::InvalidRecurrence(format!(
            "quadrature with {} nodes needs gamma_0..gamma_{k}, have {}",
            k + 1,
            rc.gamma().len()
        )));
    }
    let sb = rc.sqrt_beta();
    let mut j = DenseMatrix::zeros(k + 1, k + 1);
    for i in 0..=k {
        j[(i, i)] = rc.gamma()[i];
        if i < k {
            j[(i, i + 1)] = sb[i + 1];
            j[(i + 1, i)] = sb[i + 1];
        }
    }
    let spec = symmetric_eig(&j)?;
    let beta0 = sb[0] * sb[0];
    let weights = (0..=k).map(|i| beta0 * spec.vectors[(0, i)].powi(2)).collect();
    DiscreteMeasure::new(spec.values, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{eval_basis, BasisKind};
    use crate::graph::{normalized_adjacency, path_graph, IsolatedNodes};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn path3_spectrum() -> Spectrum {
        let p = normalized_adjacency(&path_graph(3).unwrap(), IsolatedNodes::Reject).unwrap();
        symmetric_eig(&p.to_dense()).unwrap()
    }

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.random_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    #[test]
    fn eig_two_by_two() {
        let m = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let s = symmetric_eig(&m).unwrap();
        assert!((s.values[0] + 1.0).abs() < 1e-14 && (s.values[1] - 1.0).abs() < 1e-14);
        let v0 = s.vectors.column(0);
        assert!((v0[0].abs() - S).abs() < 1e-14 && (v0[0] + v0[1]).abs() < 1e-14);
        let v1 = s.vectors.column(1);
        assert!((v1[0] - v1[1]).abs() < 1e-14);
    }

    #[test]
    fn eig_identity_and_path() {
        let s = symmetric_eig(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(s.values, vec![1.0; 3]);
        let s = path3_spectrum();
        for (got, want) in s.values.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn eig_rejects_asymmetric_and_oversized() {
        let m = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.0]]).unwrap();
        assert!(matches!(symmetric_eig(&m), Err(Error::InvalidArgument(_))));
        let cfg = EigConfig { max_n: 2, ..EigConfig::default() };
        assert!(symmetric_eig_with(&DenseMatrix::identity(3), &cfg).is_err());
    }

    #[test]
    fn eig_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 2, 5, 17, 40, 64] {
            let m = random_symmetric(n, &mut rng);
            let s = symmetric_eig(&m).unwrap();
            let r = s.reconstruct();
            let err: f64 = m
                .as_slice()
                .iter()
                .zip(r.as_slice())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err <= 1e-7 * m.frobenius_norm().max(1e-300), "n={n} err={err}");
            let g = s.vectors.transpose().matmul(&s.vectors).unwrap();
            assert!(g.max_abs_diff(&DenseMatrix::identity(n)) < 1e-8);
            assert!(s.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn weight_measure_examples() {
        let s = path3_spectrum();
        let m = spectral_weight_measure(&s, &[1.0, 0.0, 0.0]).unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-14);
        for (w, want) in m.weights().iter().zip([0.25, 0.5, 0.25]) {
            assert!((w - want).abs() < 1e-14);
        }
        let u0 = s.vectors.column(0);
        let single = spectral_weight_measure(&s, &u0).unwrap();
        assert!((single.weights()[0] - 1.0).abs() < 1e-14);
        assert_eq!(single.support_size(), 1);
        assert!(matches!(
            spectral_weight_measure(&s, &[0.0; 3]),
            Err(Error::DegenerateMeasure(_))
        ));
    }

    #[test]
    fn weight_measure_merges_degenerate_eigenvalues() {
        let s = symmetric_eig(&DenseMatrix::identity(4)).unwrap();
        let m = spectral_weight_measure(&s, &[1.0, 2.0, 0.0, 0.0]).unwrap();
        assert_eq!(m.nodes().len(), 1);
        assert!((m.weights()[0] - 5.0).abs() < 1e-13);
    }

    #[test]
    fn stieltjes_two_point_measure() {
        let m = DiscreteMeasure::new(vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let rc = gram_schmidt_polynomials(&m, 1).unwrap();
        assert!((rc.sqrt_beta()[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(rc.gamma()[0].abs() < 1e-15);
        // p_1 = mu / sqrt(2): sqrt_beta_1 = ||mu p_0|| = 1
        assert!((rc.sqrt_beta()[1] - 1.0).abs() < 1e-15);
        for x in [-1.0, 1.0] {
            let p = rc.eval(1, x);
            assert!((p[0] - S).abs() < 1e-15 && (p[1] - x * S).abs() < 1e-15);
        }
        assert!(matches!(
            gram_schmidt_polynomials(&m, 2),
            Err(Error::DegenerateBasis { order: 2, .. })
        ));
    }

    #[test]
    fn stieltjes_single_atom_and_path3() {
        let m = DiscreteMeasure::new(vec![0.3], vec![4.0]).unwrap();
        let rc = gram_schmidt_polynomials(&m, 0).unwrap();
        assert_eq!(rc.eval(0, 0.3), vec![0.5]);

        let s = path3_spectrum();
        let m = spectral_weight_measure(&s, &[1.0, 0.0, 0.0]).unwrap();
        let rc = gram_schmidt_polynomials(&m, 2).unwrap();
        let expect_sb = [1.0, S, S];
        for (a, b) in rc.sqrt_beta().iter().zip(expect_sb) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(rc.gamma().iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn condition_numbers() {
        assert!((condition_number(&DenseMatrix::identity(5)).unwrap() - 1.0).abs() < 1e-14);
        let d = DenseMatrix::from_diag(&[4.0, 1.0]);
        assert!((condition_number(&d).unwrap() - 4.0).abs() < 1e-14);
        let sing = DenseMatrix::from_diag(&[1.0, 0.0]);
        assert!(condition_number(&sing).unwrap().is_infinite());
    }

    #[test]
    fn hessian_of_constant_basis() {
        let s = path3_spectrum();
        let x = [1.0, 2.0, -1.0];
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let g = DenseMatrix::from_row_major(1, 3, vec![1.0 / nx; 3]).unwrap();
        let h = hessian_matrix(&s, &g, &x).unwrap();
        assert!((h[(0, 0)] - 1.0).abs() < 1e-14);
        let bad = DenseMatrix::zeros(1, 2);
        assert!(hessian_matrix(&s, &bad, &x).is_err());
    }

    #[test]
    fn monomial_hessian_matches_dense_powers() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = crate::graph::random_connected_graph(20, 20, &mut rng).unwrap();
        let p = normalized_adjacency(&g, IsolatedNodes::Reject).unwrap();
        let s = symmetric_eig(&p.to_dense()).unwrap();
        let x: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k = 5;
        let vals = eval_basis(&BasisKind::Monomial, k, &s.values).unwrap();
        let h = hessian_matrix(&s, &vals, &x).unwrap();
        // brute force: x^T P^a P^b x via repeated sparse products
        let mut powers = vec![x.clone()];
        for i in 0..k {
            powers.push(p.spmv(&powers[i]).unwrap());
        }
        for a in 0..=k {
            for b in 0..=k {
                let direct: f64 = powers[a].iter().zip(&powers[b]).map(|(u, v)| u * v).sum();
                assert!((h[(a, b)] - direct).abs() < 1e-10);
            }
        }
        assert!(condition_number(&h).unwrap() > 100.0);
    }

    #[test]
    fn exact_filter_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = crate::graph::random_connected_graph(15, 10, &mut rng).unwrap();
        let p = normalized_adjacency(&g, IsolatedNodes::Reject).unwrap();
        let s = symmetric_eig(&p.to_dense()).unwrap();
        let x: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let id = exact_filter(&s, |_| 1.0, &x).unwrap();
        assert!(id.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-8));
        let px = exact_filter(&s, |l| 1.0 - l, &x).unwrap();
        let direct = p.spmv(&x).unwrap();
        assert!(px.iter().zip(&direct).all(|(a, b)| (a - b).abs() < 1e-8));
        // (L^2 + I) x with L = I - P
        let lap = crate::graph::normalized_laplacian(&p);
        let lx = lap.spmv(&x).unwrap();
        let llx = lap.spmv(&lx).unwrap();
        let y = exact_filter(&s, |l| l * l + 1.0, &x).unwrap();
        for i in 0..15 {
            assert!((y[i] - (llx[i] + x[i])).abs() < 1e-8);
        }
    }

    #[test]
    fn quadrature_small_cases() {
        let rc = RecurrenceCoefficients::new(vec![1.5], vec![]).unwrap();
        assert!(gauss_quadrature(&rc, 0).is_err());
        let rc = RecurrenceCoefficients::new(vec![1.5, 1.0], vec![0.25]).unwrap();
        let q = gauss_quadrature(&rc, 0).unwrap();
        assert_eq!(q.nodes(), &[0.25]);
        assert!((q.weights()[0] - 2.25).abs() < 1e-14);

        let rc = RecurrenceCoefficients::new(vec![2f64.sqrt(), S, 0.5, 0.5, 0.5], vec![0.0; 4]).unwrap();
        let q = gauss_quadrature(&rc, 3).unwrap();
        let n = q.nodes();
        for i in 0..4 {
            assert!((n[i] + n[3 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_orthonormality_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let k = 8;
            let sb: Vec<f64> = (0..k + 2).map(|_| rng.random_range(0.1..2.0)).collect();
            let g: Vec<f64> = (0..k + 1).map(|_| rng.random_range(-1.0..1.0)).collect();
            let rc = RecurrenceCoefficients::new(sb, g).unwrap();
            let q = gauss_quadrature(&rc, k).unwrap();
            let vals: Vec<Vec<f64>> = q.nodes().iter().map(|&x| rc.eval(k, x)).collect();
            for a in 0..=k {
                for b in 0..=k {
                    let ip: f64 = q.weights().iter().zip(&vals).map(|(w, p)| w * p[a] * p[b]).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((ip - want).abs() < 1e-7, "({a},{b}) -> {ip}");
                }
            }
        }
    }
}
