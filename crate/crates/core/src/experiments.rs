//! Synthetic datasets and experiment protocols: channel-wise filter
//! learning, long-run convergence curves, optimality verification against
//! the dense oracle, and loading of node-classification datasets.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::basis::{eval_basis, BasisKind};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::filtering::{
    favard_filtering, full_gs_vectors, optbasis_filtering, CoefficientMatrix, SignalMatrix,
};
use crate::graph::{
    build_grid_graph, load_edge_list, normalized_adjacency, random_connected_graph, write_edge_list, Graph,
    IsolatedNodes, SparseMatrix,
};
use crate::oracle::{
    condition_number, exact_filter, gram_schmidt_polynomials, hessian_matrix, spectral_weight_measure,
    symmetric_eig_with, EigConfig, Spectrum, DEFAULT_ORACLE_CAP,
};
use crate::train::{train_filter_learning, Split, StopReason, TrainConfig};

/// Spectral response `h(lambda)` on `[0, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterSpec {
    LowPass,
    HighPass,
    BandPass,
    BandReject,
    Identity,
    /// Piecewise-linear through `(lambda, h)` samples sorted by `lambda`,
    /// held constant outside the sampled range.
    Custom(Vec<(f64, f64)>),
}

impl FilterSpec {
    pub fn eval(&self, lambda: f64) -> f64 {
        match self {
            FilterSpec::LowPass => (-10.0 * lambda * lambda).exp(),
            FilterSpec::HighPass => 1.0 - (-10.0 * lambda * lambda).exp(),
            FilterSpec::BandPass => (-10.0 * (lambda - 1.0).powi(2)).exp(),
            FilterSpec::BandReject => 1.0 - (-10.0 * (lambda - 1.0).powi(2)).exp(),
            FilterSpec::Identity => 1.0,
            FilterSpec::Custom(pts) => {
                let i = pts.partition_point(|&(l, _)| l < lambda);
                if i == 0 {
                    return pts[0].1;
                }
                if i == pts.len() {
                    return pts[pts.len() - 1].1;
                }
                let ((l0, h0), (l1, h1)) = (pts[i - 1], pts[i]);
                h0 + (h1 - h0) * (lambda - l0) / (l1 - l0)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FilterSpec::LowPass => "low_pass",
            FilterSpec::HighPass => "high_pass",
            FilterSpec::BandPass => "band_pass",
            FilterSpec::BandReject => "band_reject",
            FilterSpec::Identity => "identity",
            FilterSpec::Custom(_) => "custom",
        }
    }

    pub fn custom(mut pts: Vec<(f64, f64)>) -> Result<Self> {
        if pts.is_empty() || pts.iter().any(|(l, h)| !l.is_finite() || !h.is_finite()) {
            return Err(Error::invalid("custom filter needs finite samples"));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(FilterSpec::Custom(pts))
    }
}

impl FromStr for FilterSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "low_pass" | "lowpass" | "lp" => Ok(FilterSpec::LowPass),
            "high_pass" | "highpass" | "hp" => Ok(FilterSpec::HighPass),
            "band_pass" | "bandpass" | "bp" => Ok(FilterSpec::BandPass),
            "band_reject" | "bandreject" | "br" => Ok(FilterSpec::BandReject),
            "identity" | "id" => Ok(FilterSpec::Identity),
            other => Err(Error::Config(format!("unknown filter {other:?}"))),
        }
    }
}

/// Free function form of [`FilterSpec::eval`].
pub fn filter_function(tag: &FilterSpec) -> impl Fn(f64) -> f64 + '_ {
    move |lambda| tag.eval(lambda)
}

/// The four three-channel filter combinations of the benchmark.
pub fn standard_combinations() -> Vec<Vec<FilterSpec>> {
    use FilterSpec::*;
    vec![
        vec![BandReject, LowPass, HighPass],
        vec![HighPass, HighPass, LowPass],
        vec![HighPass, LowPass, HighPass],
        vec![LowPass, BandReject, BandReject],
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterLearningSample {
    pub id: usize,
    pub base: usize,
    pub combination: usize,
    pub x: SignalMatrix,
    pub y: SignalMatrix,
    pub tags: Vec<FilterSpec>,
}

/// Grid graph, its operator and spectrum, and the generated samples.
pub struct FilterDataset {
    pub graph: Graph,
    pub p: SparseMatrix,
    pub spectrum: Spectrum,
    pub samples: Vec<FilterLearningSample>,
}

/// Fraction of the spectrum (lowest `lambda`) mixed into base signals.
pub const SMOOTH_FRACTION: f64 = 0.1;

/// Builds `n_base * combinations.len()` samples on a `grid_h x grid_w` grid.
///
/// Each base signal has one channel per filter in a combination; every
/// channel is a standard-normal mixture of the eigenvectors with the lowest
/// 10% of `lambda`, min-max scaled to `[0, 1]`. Targets are the exact
/// spectral filters of the channels.
pub fn make_filter_dataset(
    grid_h: usize,
    grid_w: usize,
    n_base: usize,
    combinations: &[Vec<FilterSpec>],
    seed: u64,
) -> Result<FilterDataset> {
    make_filter_dataset_with_cap(grid_h, grid_w, n_base, combinations, seed, DEFAULT_ORACLE_CAP)
}

pub fn make_filter_dataset_with_cap(
    grid_h: usize,
    grid_w: usize,
    n_base: usize,
    combinations: &[Vec<FilterSpec>],
    seed: u64,
    oracle_cap: usize,
) -> Result<FilterDataset> {
    let n = grid_h * grid_w;
    if n > oracle_cap {
        return Err(Error::Config(format!(
            "a {grid_h}x{grid_w} grid has {n} nodes, above the dense oracle limit of {oracle_cap}"
        )));
    }
    let d = combinations.first().map_or(0, Vec::len);
    if d == 0 || combinations.iter().any(|c| c.len() != d) {
        return Err(Error::Config("combinations must be non-empty and equally wide".into()));
    }
    let graph = build_grid_graph(grid_h, grid_w)?;
    let p = normalized_adjacency(&graph, IsolatedNodes::Reject)?;
    let spectrum = symmetric_eig_with(
        &p.to_dense(),
        &EigConfig {
            max_n: oracle_cap,
            ..EigConfig::default()
        },
    )?;
    let n_smooth = ((n as f64 * SMOOTH_FRACTION).ceil() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_base * combinations.len());
    for base in 0..n_base {
        let cols: Vec<Vec<f64>> = (0..d).map(|_| smooth_signal(&spectrum, n_smooth, &mut rng)).collect();
        let x = SignalMatrix::from_columns(cols)?;
        for (ci, combo) in combinations.iter().enumerate() {
            let ycols = combo
                .iter()
                .enumerate()
                .map(|(l, tag)| exact_filter(&spectrum, filter_function(tag), x.column(l)))
                .collect::<Result<Vec<_>>>()?;
            samples.push(FilterLearningSample {
                id: samples.len(),
                base,
                combination: ci,
                x: x.clone(),
                y: SignalMatrix::from_columns(ycols)?,
                tags: combo.clone(),
            });
        }
    }
    Ok(FilterDataset {
        graph,
        p,
        spectrum,
        samples,
    })
}

fn smooth_signal(s: &Spectrum, n_smooth: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = s.dim();
    let mut x = vec![0.0; n];
    // largest mu = smallest lambda; eigenvalues are ascending
    for j in n - n_smooth..n {
        let c: f64 = rng.sample(StandardNormal);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += c * s.vectors[(i, j)];
        }
    }
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    x.iter().map(|v| (v - lo) / span).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub basis: String,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator).
    pub stdv: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub basis: String,
    pub sample: usize,
    pub final_loss: f64,
    pub epochs: usize,
    pub stop: StopReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub summary: Vec<SummaryRow>,
    pub samples: Vec<SampleRow>,
    /// `(basis, sample, per-epoch loss)`.
    pub curves: Vec<(String, usize, Vec<f64>)>,
}

/// Mean and sample standard deviation, summed in order.
pub fn mean_stdv(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Sizes a parsed `favard` kind for order `k`.
pub fn sized_basis(kind: &BasisKind, k: usize) -> BasisKind {
    match kind {
        BasisKind::Favard(_) => BasisKind::Favard(crate::basis::RecurrenceCoefficients::unit(k)),
        other => other.clone(),
    }
}

/// Trains every basis on every sample (in parallel) and aggregates the final
/// losses per basis.
pub fn run_filter_learning_suite(
    ds: &FilterDataset,
    bases: &[BasisKind],
    k: usize,
    cfg: &TrainConfig,
) -> Result<SuiteResult> {
    if bases.is_empty() {
        return Err(Error::Config("no bases requested".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..bases.len())
        .flat_map(|b| (0..ds.samples.len()).map(move |s| (b, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(b, s)| {
            let sample = &ds.samples[s];
            train_filter_learning(&ds.p, &sample.x, &sample.y, sized_basis(&bases[b], k), k, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summary = Vec::new();
    let mut samples = Vec::new();
    let mut curves = Vec::new();
    for (bi, basis) in bases.iter().enumerate() {
        let mut finals = Vec::new();
        for ((b, s), run) in jobs.iter().zip(&runs) {
            if *b != bi {
                continue;
            }
            finals.push(run.final_loss);
            samples.push(SampleRow {
                basis: basis.name(),
                sample: *s,
                final_loss: run.final_loss,
                epochs: run.curve.len(),
                stop: run.stop,
            });
            curves.push((basis.name(), *s, run.curve.clone()));
        }
        let (mean, stdv) = mean_stdv(&finals);
        summary.push(SummaryRow {
            basis: basis.name(),
            mean,
            stdv,
            n: finals.len(),
        });
    }
    Ok(SuiteResult {
        summary,
        samples,
        curves,
    })
}

/// Full round-trip float formatting (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

/// Writes `summary.csv`, `samples.csv` and one `curves_<basis>_<sample>.csv`
/// per run into `dir`.
pub fn write_suite(result: &SuiteResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("summary.csv");
    let mut w = csv_writer(&path)?;
    let res: std::result::Result<(), csv::Error> = (|| {
        w.write_record(["basis", "mean", "stdv", "n"])?;
        for r in &result.summary {
            w.write_record([r.basis.clone(), fmt_f64(r.mean), fmt_f64(r.stdv), r.n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| csv_err(&path, e))?;

    let path = dir.join("samples.csv");
    let mut w = csv_writer(&path)?;
    let res: std::result::Result<(), csv::Error> = (|| {
        w.write_record(["basis", "sample", "final_loss", "epochs", "stop"])?;
        for r in &result.samples {
            let stop = serde_json::to_value(r.stop).expect("serializes");
            w.write_record([
                r.basis.clone(),
                r.sample.to_string(),
                fmt_f64(r.final_loss),
                r.epochs.to_string(),
                stop.as_str().unwrap_or_default().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| csv_err(&path, e))?;

    for (basis, sample, curve) in &result.curves {
        let path = dir.join(format!("curves_{}_{sample}.csv", file_safe(basis)));
        write_curve(&path, curve)?;
    }
    Ok(())
}

fn write_curve(path: &Path, curve: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let res: std::result::Result<(), csv::Error> = (|| {
        w.write_record(["epoch", "loss"])?;
        for (e, l) in curve.iter().enumerate() {
            w.write_record([e.to_string(), fmt_f64(*l)])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| csv_err(path, e))
}

/// A long training run without early stopping.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCurve {
    pub basis: String,
    pub losses: Vec<f64>,
    /// Epochs `t` where `loss[t] - loss[t-1]` exceeds the bump tolerance.
    pub bumps: Vec<usize>,
}

impl ConvergenceCurve {
    /// Largest epoch-to-epoch increase from `start` onwards (0 if none).
    pub fn max_increase_after(&self, start: usize) -> f64 {
        max_increase_after(&self.losses, start)
    }

    /// First epoch whose loss is at or below `level`.
    pub fn first_epoch_at_or_below(&self, level: f64) -> Option<usize> {
        self.losses.iter().position(|&l| l <= level)
    }
}

pub fn max_increase_after(losses: &[f64], start: usize) -> f64 {
    losses
        .windows(2)
        .enumerate()
        .skip(start)
        .map(|(_, w)| w[1] - w[0])
        .fold(0.0, f64::max)
}

pub const BUMP_TOL: f64 = 1e-3;

/// Trains each basis for exactly `epochs` epochs on one sample.
pub fn run_convergence_study(
    p: &SparseMatrix,
    sample: &FilterLearningSample,
    bases: &[BasisKind],
    k: usize,
    epochs: usize,
    cfg: &TrainConfig,
) -> Result<Vec<ConvergenceCurve>> {
    let cfg = TrainConfig {
        max_epochs: epochs,
        loss_delta_stop: None,
        ..cfg.clone()
    };
    bases
        .par_iter()
        .map(|b| {
            let run = train_filter_learning(p, &sample.x, &sample.y, sized_basis(b, k), k, &cfg)?;
            let bumps = run
                .curve
                .windows(2)
                .enumerate()
                .filter(|(_, w)| w[1] - w[0] > BUMP_TOL)
                .map(|(i, _)| i + 1)
                .collect();
            Ok(ConvergenceCurve {
                basis: b.name(),
                losses: run.curve,
                bumps,
            })
        })
        .collect()
}

/// Writes `convergence.csv` (one loss column per basis) and `bumps.csv`.
pub fn write_convergence(curves: &[ConvergenceCurve], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("convergence.csv");
    let mut w = csv_writer(&path)?;
    let len = curves.iter().map(|c| c.losses.len()).max().unwrap_or(0);
    let res: std::result::Result<(), csv::Error> = (|| {
        let mut header = vec!["epoch".to_string()];
        header.extend(curves.iter().map(|c| c.basis.clone()));
        w.write_record(&header)?;
        for e in 0..len {
            let mut row = vec![e.to_string()];
            row.extend(curves.iter().map(|c| c.losses.get(e).map(|&l| fmt_f64(l)).unwrap_or_default()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| csv_err(&path, e))?;
    let path = dir.join("bumps.csv");
    let mut w = csv_writer(&path)?;
    let res: std::result::Result<(), csv::Error> = (|| {
        w.write_record(["basis", "epoch", "increase"])?;
        for c in curves {
            for &e in &c.bumps {
                w.write_record([c.basis.clone(), e.to_string(), fmt_f64(c.losses[e] - c.losses[e - 1])])?;
            }
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| csv_err(&path, e))
}

/// Tolerances checked by [`run_optimality_verification`].
pub const KAPPA_TOL: f64 = 1e-6;
pub const MATCH_TOL: f64 = 1e-7;
pub const FAVARD_MATCH_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Perturbs the recorded recurrences before comparison, so the report
    /// must fail.
    pub inject_fault: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationCase {
    pub case: usize,
    pub n: usize,
    pub order: usize,
    pub support: usize,
    pub kappa_optbasis: f64,
    pub kappa_monomial: Option<f64>,
    pub kappa_chebyshev: Option<f64>,
    pub recurrence_deviation: f64,
    pub orthonormality_error: f64,
    pub two_term_vs_full_gs: f64,
    pub residual_gap: f64,
    pub favard_reproduction: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationCheck {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub n_graphs: usize,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub worst_kappa_deviation: f64,
    pub checks: Vec<VerificationCheck>,
    pub monomial_kappa_larger_everywhere: bool,
    pub cases: Vec<VerificationCase>,
    pub passed: bool,
}

/// Monomial basis values `mu^k` (or another fixed basis) at the eigenvalues.
fn fixed_values(kind: &BasisKind, k: usize, s: &Spectrum) -> Result<DenseMatrix> {
    match kind {
        BasisKind::Bernstein => eval_basis(kind, k, &s.values.iter().map(|m| 1.0 - m).collect::<Vec<_>>()),
        _ => eval_basis(kind, k, &s.values),
    }
}

fn verify_case(case: usize, n: usize, k: usize, rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Result<VerificationCase> {
    let g = random_connected_graph(n, n, rng)?;
    let p = normalized_adjacency(&g, IsolatedNodes::Reject)?;
    let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let s = symmetric_eig_with(&p.to_dense(), &EigConfig::default())?;
    let measure = spectral_weight_measure(&s, &x)?;
    let support = measure.support_size();
    let order = k.min(support.saturating_sub(1));

    let alpha: Vec<f64> = (0..=order).map(|_| rng.random_range(-1.0..1.0)).collect();
    let xs = SignalMatrix::from_vector(x.clone());
    let coef = CoefficientMatrix::broadcast(1, &alpha)?;
    let (z, v) = optbasis_filtering(&p, &xs, &coef, true)?;
    let v = v.expect("kept");
    let rec = &v.recurrences()[0];
    let mut recorded = rec.coefficients().ok_or_else(|| Error::Numerical("zero signal".into()))?;
    if opts.inject_fault {
        let mut sb = recorded.sqrt_beta().to_vec();
        let last = sb.len() - 1;
        sb[last] *= 1.0 + 1e-3;
        recorded = crate::basis::RecurrenceCoefficients::new(sb, recorded.gamma().to_vec())?;
    }
    let oracle = gram_schmidt_polynomials(&measure, order)?;
    let recurrence_deviation = recorded.truncated(order.min(recorded.max_degree()))?.max_abs_diff(&oracle);

    // accompanying polynomials at the eigenvalues give the Hessian
    let values = DenseMatrix::from_rows(
        &s.values.iter().map(|&mu| recorded.eval(order, mu)).collect::<Vec<_>>(),
    )?
    .transpose();
    let h_opt = hessian_matrix(&s, &values, &x)?;
    let kappa_optbasis = condition_number(&h_opt)?;
    let identity_gap = h_opt.max_abs_diff(&DenseMatrix::identity(order + 1));
    let kappa_of = |kind: BasisKind| -> Result<Option<f64>> {
        if order < 1 {
            return Ok(None);
        }
        let h = hessian_matrix(&s, &fixed_values(&kind, order, &s)?, &x)?;
        condition_number(&h).map(Some)
    };
    let kappa_monomial = kappa_of(BasisKind::Monomial)?;
    let kappa_chebyshev = kappa_of(BasisKind::Chebyshev)?;

    let (full, _) = full_gs_vectors(&p, &x, order)?;
    let mut two_term_vs_full_gs = 0.0f64;
    for kk in 0..rec.retained.min(order + 1) {
        for (a, b) in v.vector(0, kk).iter().zip(&full[kk]) {
            two_term_vs_full_gs = two_term_vs_full_gs.max((a - b).abs());
        }
    }

    let favard_reproduction = if recorded.sqrt_beta().iter().all(|&b| b >= crate::filtering::SQRT_BETA_CLAMP) {
        let sb = DenseMatrix::from_row_major(1, order + 1, recorded.sqrt_beta().to_vec())?;
        let gm = DenseMatrix::from_row_major(1, order, recorded.gamma().to_vec())?;
        let zf = favard_filtering(&p, &xs, &sb, &gm, &coef)?;
        zf.max_abs_diff(&z)
    } else {
        0.0
    };

    Ok(VerificationCase {
        case,
        n,
        order,
        support,
        kappa_optbasis: identity_gap.max((kappa_optbasis - 1.0).abs()) + 1.0,
        kappa_monomial,
        kappa_chebyshev,
        recurrence_deviation,
        orthonormality_error: v.orthonormality_error(),
        two_term_vs_full_gs,
        residual_gap: rec.residual_gap(),
        favard_reproduction,
        error: None,
    })
}

/// Checks the optimal-basis claims on `n_graphs` random connected graphs
/// with `n` nodes against the dense oracle.
pub fn run_optimality_verification(n_graphs: usize, n: usize, k: usize, seed: u64, opts: &VerifyOptions) -> Result<VerificationReport> {
    if n > DEFAULT_ORACLE_CAP {
        return Err(Error::Config(format!(
            "n = {n} exceeds the dense oracle limit of {DEFAULT_ORACLE_CAP}"
        )));
    }
    if n < 2 || n_graphs == 0 {
        return Err(Error::Config("need at least one graph with two or more nodes".into()));
    }
    let cases: Vec<VerificationCase> = (0..n_graphs)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(c as u64));
            verify_case(c, n, k, &mut rng, opts).unwrap_or_else(|e| VerificationCase {
                case: c,
                n,
                order: 0,
                support: 0,
                kappa_optbasis: f64::NAN,
                kappa_monomial: None,
                kappa_chebyshev: None,
                recurrence_deviation: f64::NAN,
                orthonormality_error: f64::NAN,
                two_term_vs_full_gs: f64::NAN,
                residual_gap: f64::NAN,
                favard_reproduction: f64::NAN,
                error: Some(e.to_string()),
            })
        })
        .collect();
    let worst = |f: &dyn Fn(&VerificationCase) -> f64| {
        cases.iter().map(f).fold(0.0f64, |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v) })
    };
    let check = |name: &str, w: f64, tol: f64| VerificationCheck {
        name: name.to_string(),
        worst: w,
        tolerance: tol,
        passed: w <= tol,
    };
    let worst_kappa_deviation = worst(&|c| (c.kappa_optbasis - 1.0).abs());
    let checks = vec![
        check("optbasis_condition_number", worst_kappa_deviation, KAPPA_TOL),
        check("recurrence_matches_oracle", worst(&|c| c.recurrence_deviation), MATCH_TOL),
        check("orthonormality", worst(&|c| c.orthonormality_error), MATCH_TOL),
        check("two_term_equals_full_gram_schmidt", worst(&|c| c.two_term_vs_full_gs), MATCH_TOL),
        check("residual_norm_identity", worst(&|c| c.residual_gap), MATCH_TOL),
        check("favard_reproduces_optbasis", worst(&|c| c.favard_reproduction), FAVARD_MATCH_TOL),
        check("case_errors", cases.iter().filter(|c| c.error.is_some()).count() as f64, 0.0),
    ];
    let monomial_kappa_larger_everywhere = cases
        .iter()
        .filter(|c| c.n >= 5 && c.order >= 2)
        .all(|c| c.kappa_monomial.is_some_and(|m| m > c.kappa_optbasis));
    let passed = checks.iter().all(|c| c.passed) && monomial_kappa_larger_everywhere;
    Ok(VerificationReport {
        schema_version: 1,
        n_graphs,
        n,
        k,
        seed,
        worst_kappa_deviation,
        checks,
        monomial_kappa_larger_everywhere,
        cases,
        passed,
    })
}

/// Graph, node features, labels and one or more splits.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationDataset {
    pub graph: Graph,
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub splits: Vec<Split>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SplitsFile {
    One(Split),
    Many(Vec<Split>),
}

/// Loads `edges.txt`, `features.csv`, `labels.csv` and `splits.json` from
/// `dir`. Without `splits.json`, `random_split` (if given) draws a
/// 60/20/20 split with that seed.
pub fn load_classification_dataset(dir: impl AsRef<Path>, random_split: Option<u64>) -> Result<ClassificationDataset> {
    let dir = dir.as_ref();
    let edges = dir.join("edges.txt");
    let mut graph = load_edge_list(&edges)?;

    let fpath = dir.join("features.csv");
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(&fpath)
        .map_err(|e| csv_err(&fpath, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{} row {}: {e}", fpath.display(), i + 1)))?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>().ok().filter(|f| f.is_finite()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Data(format!("{} row {}: non-numeric value", fpath.display(), i + 1)))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Data(format!(
                    "{} row {}: {} columns, expected {}",
                    fpath.display(),
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::Data(format!("{} is empty", fpath.display())));
    }
    if graph.n_nodes() > n {
        return Err(Error::Data(format!(
            "{} mentions node {} but {} has only {n} rows",
            edges.display(),
            graph.n_nodes() - 1,
            fpath.display()
        )));
    }
    if graph.n_nodes() < n {
        graph = Graph::new(n, graph.edges().iter().copied())?;
    }
    let f = rows[0].len();
    let features = Tensor::from_vec(n, f, rows.concat())?;

    let lpath = dir.join("labels.csv");
    let text = fs::read_to_string(&lpath).map_err(|e| Error::io(&lpath, e))?;
    let mut labels = Vec::with_capacity(n);
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let y = t
            .parse::<usize>()
            .map_err(|_| Error::Data(format!("{} row {}: bad label {t:?}", lpath.display(), i + 1)))?;
        labels.push(y);
    }
    if labels.len() != n {
        return Err(Error::Data(format!(
            "{} has {} labels for {n} feature rows",
            lpath.display(),
            labels.len()
        )));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut seen = vec![false; n_classes];
    labels.iter().for_each(|&y| seen[y] = true);
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Data(format!(
            "{}: labels are not contiguous from 0 (class {missing} unused)",
            lpath.display()
        )));
    }

    let spath = dir.join("splits.json");
    let splits = if spath.exists() {
        let text = fs::read_to_string(&spath).map_err(|e| Error::io(&spath, e))?;
        let parsed: SplitsFile =
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", spath.display())))?;
        let splits = match parsed {
            SplitsFile::One(s) => vec![s],
            SplitsFile::Many(v) => v,
        };
        for (si, s) in splits.iter().enumerate() {
            for (name, ids) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
                if let Some(i) = ids.iter().find(|&&i| i >= n) {
                    return Err(Error::Data(format!(
                        "{} split {si}: {name} id {i} out of range for {n} nodes",
                        spath.display()
                    )));
                }
            }
        }
        splits
    } else if let Some(seed) = random_split {
        vec![random_split_for(n, seed)]
    } else {
        return Err(Error::Data(format!(
            "{} not found; supply it or use the random-split option",
            spath.display()
        )));
    };
    if splits.is_empty() {
        return Err(Error::Data(format!("{} holds no splits", spath.display())));
    }
    Ok(ClassificationDataset {
        graph,
        features,
        labels,
        n_classes,
        splits,
    })
}

/// Seeded 60/20/20 permutation split.
pub fn random_split_for(n: usize, seed: u64) -> Split {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n as f64 * 0.6).round() as usize;
    let n_val = (n as f64 * 0.2).round() as usize;
    Split {
        train: ids[..n_train].to_vec(),
        val: ids[n_train..n_train + n_val].to_vec(),
        test: ids[n_train + n_val..].to_vec(),
    }
}

/// Writes a dataset in the layout read by [`load_classification_dataset`].
pub fn write_classification_dataset(ds: &ClassificationDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_edge_list(&ds.graph, dir.join("edges.txt"))?;
    let mut feats = String::new();
    for i in 0..ds.features.rows() {
        let row: Vec<String> = ds.features.row(i).iter().map(|v| v.to_string()).collect();
        feats.push_str(&row.join(","));
        feats.push('\n');
    }
    let fpath = dir.join("features.csv");
    fs::write(&fpath, feats).map_err(|e| Error::io(&fpath, e))?;
    let labels: String = ds.labels.iter().map(|y| format!("{y}\n")).collect();
    let lpath = dir.join("labels.csv");
    fs::write(&lpath, labels).map_err(|e| Error::io(&lpath, e))?;
    let spath = dir.join("splits.json");
    let text = serde_json::to_string_pretty(&ds.splits).expect("splits serialize");
    fs::write(&spath, text).map_err(|e| Error::io(&spath, e))
}

pub const CLIQUE_SIZE: usize = 10;

/// Two 10-cliques joined by a single edge. Features are a one-hot degree
/// encoding followed by two indicator columns marking training nodes of
/// each class (zero for validation and test nodes).
pub fn two_clique_fixture() -> ClassificationDataset {
    let m = CLIQUE_SIZE;
    let mut edges = Vec::new();
    for c in 0..2 {
        for i in 0..m {
            for j in i + 1..m {
                edges.push((c * m + i, c * m + j));
            }
        }
    }
    edges.push((m - 1, m));
    let graph = Graph::new(2 * m, edges).expect("valid fixture");
    let labels: Vec<usize> = (0..2 * m).map(|i| i / m).collect();
    let split = Split {
        // both bridge endpoints train, so the degree feature alone is ambiguous
        train: vec![0, 1, m - 1, m, m + 1, m + 2],
        val: vec![2, 3, m + 3, m + 4],
        test: (4..m - 1).chain(m + 5..2 * m).collect(),
    };
    let degrees = graph.degrees();
    let max_deg = *degrees.iter().max().expect("non-empty");
    let f = max_deg + 1 + 2;
    let mut features = Tensor::zeros(2 * m, f);
    for (i, &d) in degrees.iter().enumerate() {
        features.data_mut()[i * f + d] = 1.0;
    }
    for &i in &split.train {
        features.data_mut()[i * f + max_deg + 1 + labels[i]] = 1.0;
    }
    ClassificationDataset {
        graph,
        features,
        labels,
        n_classes: 2,
        splits: vec![split],
    }
}
