//! Polynomial bases: named classical families, the orthonormal three-term
//! recurrence family and Bernstein polynomials.
//!
//! Spectral bases are functions of `mu = 1 - lambda` in `[-1, 1]`, i.e. they
//! are applied as `g(P)`. Bernstein polynomials are functions of `lambda` in
//! `[0, 2]` and are applied as `g(L)`.

use std::fmt;
use std::str::FromStr;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Coefficients of an orthonormal polynomial series
/// `sqrt_beta[k+1] p_{k+1}(x) = (x - gamma[k]) p_k(x) - sqrt_beta[k] p_{k-1}(x)`
/// with `p_{-1} = 0` and `p_0 = 1 / sqrt_beta[0]`.
///
/// `sqrt_beta.len() == gamma.len() + 1`; the series is defined up to degree
/// `gamma.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceCoefficients {
    sqrt_beta: Vec<f64>,
    gamma: Vec<f64>,
}

impl RecurrenceCoefficients {
    pub fn new(sqrt_beta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if sqrt_beta.len() != gamma.len() + 1 {
            return Err(Error::InvalidRecurrence(format!(
                "need len(sqrt_beta) = len(gamma) + 1, got {} and {}",
                sqrt_beta.len(),
                gamma.len()
            )));
        }
        if let Some((k, b)) = sqrt_beta
            .iter()
            .enumerate()
            .find(|(_, b)| !(b.is_finite() && **b > 0.0))
        {
            return Err(Error::InvalidRecurrence(format!(
                "sqrt_beta[{k}] = {b} must be positive"
            )));
        }
        if gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidRecurrence("non-finite gamma".into()));
        }
        Ok(Self { sqrt_beta, gamma })
    }

    /// The initialization used for trainable Favard filters: `sqrt_beta = 1`,
    /// `gamma = 0`, sized for order `k` (`k + 2` and `k + 1` entries).
    pub fn unit(k: usize) -> Self {
        Self {
            sqrt_beta: vec![1.0; k + 2],
            gamma: vec![0.0; k + 1],
        }
    }

    pub fn sqrt_beta(&self) -> &[f64] {
        &self.sqrt_beta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Highest degree the coefficients define.
    pub fn max_degree(&self) -> usize {
        self.gamma.len()
    }

    /// Keeps the coefficients that define `p_0 .. p_degree`.
    pub fn truncated(&self, degree: usize) -> Result<Self> {
        if degree > self.max_degree() {
            return Err(Error::invalid(format!(
                "cannot truncate degree {} series to degree {degree}",
                self.max_degree()
            )));
        }
        Ok(Self {
            sqrt_beta: self.sqrt_beta[..=degree].to_vec(),
            gamma: self.gamma[..degree].to_vec(),
        })
    }

    /// `p_0(x) .. p_degree(x)`.
    pub fn eval(&self, degree: usize, x: f64) -> Vec<f64> {
        assert!(degree <= self.max_degree());
        let mut p = Vec::with_capacity(degree + 1);
        p.push(1.0 / self.sqrt_beta[0]);
        let mut prev = 0.0;
        for k in 0..degree {
            let next = ((x - self.gamma[k]) * p[k] - self.sqrt_beta[k] * prev) / self.sqrt_beta[k + 1];
            prev = p[k];
            p.push(next);
        }
        p
    }

    /// Largest entrywise deviation over the common prefix of both series.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let sb = self
            .sqrt_beta
            .iter()
            .zip(&other.sqrt_beta)
            .map(|(a, b)| (a - b).abs());
        let g = self.gamma.iter().zip(&other.gamma).map(|(a, b)| (a - b).abs());
        sb.chain(g).fold(0.0, f64::max)
    }
}

/// Generic three-term recurrence
/// `p_{k+1}(x) = (a_k x + b_k) p_k(x) + c_k p_{k-1}(x)`, `p_0 = p0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeTermRecurrence {
    pub p0: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl ThreeTermRecurrence {
    pub fn order(&self) -> usize {
        self.a.len()
    }

    /// Row `k` holds `p_k` at every point.
    pub fn eval(&self, points: &[f64]) -> DenseMatrix {
        let k_max = self.order();
        let mut out = DenseMatrix::zeros(k_max + 1, points.len());
        for (j, &x) in points.iter().enumerate() {
            let mut prev = 0.0;
            let mut cur = self.p0;
            out[(0, j)] = cur;
            for k in 0..k_max {
                let next = (self.a[k] * x + self.b[k]) * cur + self.c[k] * prev;
                prev = cur;
                cur = next;
                out[(k + 1, j)] = cur;
            }
        }
        out
    }
}

impl From<&RecurrenceCoefficients> for ThreeTermRecurrence {
    fn from(rc: &RecurrenceCoefficients) -> Self {
        let k = rc.max_degree();
        let sb = rc.sqrt_beta();
        Self {
            p0: 1.0 / sb[0],
            a: (0..k).map(|i| 1.0 / sb[i + 1]).collect(),
            b: (0..k).map(|i| -rc.gamma()[i] / sb[i + 1]).collect(),
            c: (0..k).map(|i| -sb[i] / sb[i + 1]).collect(),
        }
    }
}

/// The polynomial bases the filters can use.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisKind {
    Monomial,
    Chebyshev,
    Jacobi { a: f64, b: f64 },
    Favard(RecurrenceCoefficients),
    OptBasis,
    Bernstein,
}

impl BasisKind {
    pub fn name(&self) -> String {
        match self {
            BasisKind::Monomial => "monomial".into(),
            BasisKind::Chebyshev => "chebyshev".into(),
            BasisKind::Jacobi { a, b } => format!("jacobi({a},{b})"),
            BasisKind::Favard(_) => "favard".into(),
            BasisKind::OptBasis => "optbasis".into(),
            BasisKind::Bernstein => "bernstein".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if let BasisKind::Jacobi { a, b } = *self {
            if !(a > -1.0 && b > -1.0) {
                return Err(Error::invalid(format!(
                    "Jacobi parameters must exceed -1, got a={a}, b={b}"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Parses `monomial`, `chebyshev`, `bernstein`, `favard`, `optbasis` and
/// `jacobi(a,b)`. A parsed `favard` carries no coefficients yet; callers size
/// it with [`RecurrenceCoefficients::unit`].
impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let kind = match s.as_str() {
            "monomial" => BasisKind::Monomial,
            "chebyshev" | "chebyshev1" => BasisKind::Chebyshev,
            "bernstein" => BasisKind::Bernstein,
            "favard" => BasisKind::Favard(RecurrenceCoefficients::unit(0)),
            "optbasis" => BasisKind::OptBasis,
            "legendre" => BasisKind::Jacobi { a: 0.0, b: 0.0 },
            other => {
                let inner = other
                    .strip_prefix("jacobi(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::Config(format!("unknown basis {other:?}")))?;
                let (a, b) = inner
                    .split_once(',')
                    .ok_or_else(|| Error::Config(format!("jacobi needs (a,b), got {other:?}")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad jacobi parameter {v:?}: {e}")))
                };
                BasisKind::Jacobi {
                    a: parse(a)?,
                    b: parse(b)?,
                }
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// Three-term form of a recurrence-representable basis up to order `k`.
///
/// Returns `Ok(None)` for Bernstein (no increasing-degree recurrence) and
/// OptBasis (depends on the graph signal).
pub fn named_recurrence(kind: &BasisKind, k: usize) -> Result<Option<ThreeTermRecurrence>> {
    kind.validate()?;
    let rec = match kind {
        BasisKind::Monomial => ThreeTermRecurrence {
            p0: 1.0,
            a: vec![1.0; k],
            b: vec![0.0; k],
            c: vec![0.0; k],
        },
        BasisKind::Chebyshev => ThreeTermRecurrence {
            p0: 1.0,
            a: (0..k).map(|i| if i == 0 { 1.0 } else { 2.0 }).collect(),
            b: vec![0.0; k],
            c: (0..k).map(|i| if i == 0 { 0.0 } else { -1.0 }).collect(),
        },
        &BasisKind::Jacobi { a, b } => jacobi_recurrence(a, b, k),
        BasisKind::Favard(rc) => {
            if rc.max_degree() < k {
                return Err(Error::invalid(format!(
                    "Favard coefficients define degree {} but order {k} requested",
                    rc.max_degree()
                )));
            }
            ThreeTermRecurrence::from(&rc.truncated(k)?)
        }
        BasisKind::OptBasis | BasisKind::Bernstein => return Ok(None),
    };
    Ok(Some(rec))
}

/// Standard-normalization Jacobi polynomials `P_n^{(a,b)}`.
fn jacobi_recurrence(a: f64, b: f64, k: usize) -> ThreeTermRecurrence {
    let mut rec = ThreeTermRecurrence {
        p0: 1.0,
        a: Vec::with_capacity(k),
        b: Vec::with_capacity(k),
        c: Vec::with_capacity(k),
    };
    for i in 0..k {
        let n = (i + 1) as f64;
        if i == 0 {
            // P_1 = ((a + b + 2) x + (a - b)) / 2
            rec.a.push((a + b + 2.0) / 2.0);
            rec.b.push((a - b) / 2.0);
            rec.c.push(0.0);
            continue;
        }
        let s = 2.0 * n + a + b;
        let denom = 2.0 * n * (n + a + b) * (s - 2.0);
        rec.a.push((s - 1.0) * s * (s - 2.0) / denom);
        rec.b.push((s - 1.0) * (a * a - b * b) / denom);
        rec.c.push(-2.0 * (n + a - 1.0) * (n + b - 1.0) * s / denom);
    }
    rec
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Bernstein polynomials on `[0, 2]`:
/// `b_k(lambda) = C(K, k) 2^{-K} (2 - lambda)^{K-k} lambda^k`.
pub fn bernstein_values(k_order: usize, lambda: f64) -> Vec<f64> {
    let scale = 0.5f64.powi(k_order as i32);
    (0..=k_order)
        .map(|k| {
            binomial(k_order, k)
                * scale
                * (2.0 - lambda).powi((k_order - k) as i32)
                * lambda.powi(k as i32)
        })
        .collect()
}

/// Evaluates a basis at `points`: row `k` is `g_k` at every point.
///
/// Points are `mu` values for recurrence bases and `lambda` values for
/// Bernstein.
pub fn eval_basis(kind: &BasisKind, k: usize, points: &[f64]) -> Result<DenseMatrix> {
    match kind {
        BasisKind::OptBasis => Err(Error::invalid(
            "OptBasis depends on the graph signal; evaluate it through the spectral oracle",
        )),
        BasisKind::Bernstein => {
            let mut out = DenseMatrix::zeros(k + 1, points.len());
            for (j, &lam) in points.iter().enumerate() {
                for (i, v) in bernstein_values(k, lam).into_iter().enumerate() {
                    out[(i, j)] = v;
                }
            }
            Ok(out)
        }
        _ => Ok(named_recurrence(kind, k)?
            .expect("recurrence-representable")
            .eval(points)),
    }
}

/// True iff `g_k` has exact degree `k` for every `k <= order`, checked by
/// finite differences on `order + 2` equispaced points.
pub fn basis_degree_check(kind: &BasisKind, order: usize) -> Result<bool> {
    let (lo, hi) = match kind {
        BasisKind::Bernstein => (0.0, 2.0),
        _ => (-1.0, 1.0),
    };
    let m = order + 2;
    let h = (hi - lo) / (m - 1) as f64;
    let points: Vec<f64> = (0..m).map(|i| lo + h * i as f64).collect();
    let vals = eval_basis(kind, order, &points)?;
    for k in 0..=order {
        let row = vals.row(k);
        let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut diff = row[..k + 2].to_vec();
        let mut kth = Vec::new();
        for level in 0..=k {
            diff = diff.windows(2).map(|w| w[1] - w[0]).collect();
            if level + 1 == k {
                kth = diff.clone();
            }
        }
        if k == 0 {
            kth = row[..1].to_vec();
        }
        let tol = 1e-9 * scale * 2f64.powi(k as i32 + 1);
        let vanishes = diff.iter().all(|d| d.abs() <= tol);
        let leading = kth.iter().any(|d| d.abs() > tol);
        if !(vanishes && leading) {
            return Ok(false);
        }
    }
    Ok(true)
}
