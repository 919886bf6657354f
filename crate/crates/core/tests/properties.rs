//! Cross-module invariants checked against the dense oracle.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specfilt::basis::eval_basis;
use specfilt::dense::DenseMatrix;
use specfilt::experiments::{
    make_filter_dataset, mean_stdv, run_filter_learning_suite, standard_combinations, write_suite, FilterSpec,
};
use specfilt::filtering::{
    favard_filtering, fixed_basis_filtering, optbasis_filtering, CoefficientMatrix, SignalMatrix,
};
use specfilt::graph::{normalized_adjacency, random_connected_graph, IsolatedNodes, SparseMatrix};
use specfilt::oracle::{exact_filter, symmetric_eig, Spectrum};
use specfilt::train::TrainConfig;
use specfilt::BasisKind;

fn setup(seed: u64, n: usize) -> (SparseMatrix, Spectrum, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_connected_graph(n, n / 2, &mut rng).unwrap();
    let p = normalized_adjacency(&g, IsolatedNodes::Reject).unwrap();
    let s = symmetric_eig(&p.to_dense()).unwrap();
    let x = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    (p, s, x)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn operator_is_symmetric_with_spectrum_in_unit_interval(seed in 0u64..10_000, n in 2usize..40) {
        let (p, s, _) = setup(seed, n);
        prop_assert!(p.asymmetry() == 0.0);
        prop_assert!(s.values.iter().all(|&mu| (-1.0 - 1e-10..=1.0 + 1e-10).contains(&mu)));
        prop_assert!((s.values[n - 1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn optbasis_filter_is_a_spectral_filter(seed in 0u64..10_000, n in 6usize..40, k in 1usize..6) {
        let (p, s, x) = setup(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let alpha: Vec<f64> = (0..=k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xs = SignalMatrix::from_vector(x.clone());
        let (z, v) = optbasis_filtering(&p, &xs, &CoefficientMatrix::from_rows(vec![alpha.clone()]).unwrap(), true).unwrap();
        let v = v.unwrap();
        let rec = &v.recurrences()[0];
        prop_assume!(rec.retained == k + 1);
        let rc = rec.coefficients().unwrap();
        let h = |lambda: f64| rc.eval(k, 1.0 - lambda).iter().zip(&alpha).map(|(p, a)| p * a).sum::<f64>();
        let zo = exact_filter(&s, h, &x).unwrap();
        prop_assert!(max_diff(z.column(0), &zo) < 1e-8);

        // the same filter through the learnable-recurrence routine
        let sb = DenseMatrix::from_row_major(1, k + 1, rc.sqrt_beta().to_vec()).unwrap();
        let gm = DenseMatrix::from_row_major(1, k, rc.gamma().to_vec()).unwrap();
        prop_assume!(rc.sqrt_beta().iter().all(|&b| b >= 1e-2));
        let zf = favard_filtering(&p, &xs, &sb, &gm, &CoefficientMatrix::from_rows(vec![alpha]).unwrap()).unwrap();
        prop_assert!(zf.max_abs_diff(&z) < 1e-8);
    }

    #[test]
    fn fixed_bases_match_exact_filters(seed in 0u64..10_000, n in 3usize..30, k in 0usize..7, which in 0usize..4) {
        let (p, s, x) = setup(seed, n);
        let kind: BasisKind = ["monomial", "chebyshev", "legendre", "bernstein"][which].parse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let alpha: Vec<f64> = (0..=k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = fixed_basis_filtering(&p, &SignalMatrix::from_vector(x.clone()), &kind, &CoefficientMatrix::from_rows(vec![alpha.clone()]).unwrap()).unwrap();
        let h = |lambda: f64| {
            let at = if kind == BasisKind::Bernstein { lambda } else { 1.0 - lambda };
            let v = eval_basis(&kind, k, &[at]).unwrap();
            (0..=k).map(|i| alpha[i] * v[(i, 0)]).sum::<f64>()
        };
        let zo = exact_filter(&s, h, &x).unwrap();
        prop_assert!(max_diff(z.column(0), &zo) < 1e-9);
    }

    #[test]
    fn filtering_is_linear_in_alpha(seed in 0u64..10_000, n in 4usize..30) {
        let (p, _, x) = setup(seed, n);
        let xs = SignalMatrix::from_vector(x);
        let a = CoefficientMatrix::from_rows(vec![vec![0.3, -0.1, 0.7, 0.2]]).unwrap();
        let b = CoefficientMatrix::from_rows(vec![vec![-0.5, 0.4, 0.0, 1.0]]).unwrap();
        let (za, _) = optbasis_filtering(&p, &xs, &a, false).unwrap();
        let (zb, _) = optbasis_filtering(&p, &xs, &b, false).unwrap();
        let (zab, _) = optbasis_filtering(&p, &xs, &a.add(&b).unwrap(), false).unwrap();
        let sum: Vec<f64> = za.column(0).iter().zip(zb.column(0)).map(|(u, v)| u + v).collect();
        prop_assert!(max_diff(&sum, zab.column(0)) < 1e-12);
    }
}

#[test]
fn chebyshev_approximates_smooth_low_pass() {
    // truncated Chebyshev series of exp(-10 (1 - mu)^2) on [-1, 1]
    let (p, s, x) = setup(3, 30);
    let k = 40;
    let nodes = 200;
    let coeffs: Vec<f64> = (0..=k)
        .map(|j| {
            let sum: f64 = (0..nodes)
                .map(|i| {
                    let t = std::f64::consts::PI * (i as f64 + 0.5) / nodes as f64;
                    FilterSpec::LowPass.eval(1.0 - t.cos()) * (j as f64 * t).cos()
                })
                .sum();
            sum * if j == 0 { 1.0 } else { 2.0 } / nodes as f64
        })
        .collect();
    let z = fixed_basis_filtering(&p, &SignalMatrix::from_vector(x.clone()), &BasisKind::Chebyshev, &CoefficientMatrix::from_rows(vec![coeffs]).unwrap()).unwrap();
    let zo = exact_filter(&s, |l| FilterSpec::LowPass.eval(l), &x).unwrap();
    assert!(max_diff(z.column(0), &zo) < 1e-6);
}

#[test]
fn suite_summary_agrees_with_sample_file() {
    let ds = make_filter_dataset(5, 5, 2, &standard_combinations(), 4).unwrap();
    let again = make_filter_dataset(5, 5, 2, &standard_combinations(), 4).unwrap();
    assert_eq!(ds.samples, again.samples);
    for s in &ds.samples {
        for (l, tag) in s.tags.iter().enumerate() {
            let y = exact_filter(&ds.spectrum, |v| tag.eval(v), s.x.column(l)).unwrap();
            assert!(max_diff(&y, s.y.column(l)) <= 1e-8);
        }
    }
    let bases: Vec<BasisKind> = vec!["optbasis".parse().unwrap(), "monomial".parse().unwrap()];
    let cfg = TrainConfig {
        max_epochs: 40,
        ..TrainConfig::filter_learning()
    };
    let r = run_filter_learning_suite(&ds, &bases, 4, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_suite(&r, dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("samples.csv")).unwrap();
    let rows: Vec<(String, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_string(), r[2].parse().unwrap())
        })
        .collect();
    for s in &r.summary {
        let vals: Vec<f64> = rows.iter().filter(|(b, _)| *b == s.basis).map(|(_, v)| *v).collect();
        let (m, sd) = mean_stdv(&vals);
        assert_eq!(vals.len(), s.n);
        assert!((m - s.mean).abs() <= 1e-12 && (sd - s.stdv).abs() <= 1e-12);
    }
    assert!(dir.path().join("curves_optbasis_0.csv").exists());
}

#[test]
fn optbasis_training_reaches_least_squares_optimum() {
    let ds = make_filter_dataset(6, 6, 1, &standard_combinations()[..1], 9).unwrap();
    let s = &ds.samples[0];
    let k = 6;
    let r = specfilt::train::train_filter_learning(&ds.p, &s.x, &s.y, BasisKind::OptBasis, k, &TrainConfig {
        weight_decay: 0.0,
        max_epochs: 3000,
        loss_delta_stop: Some(1e-12),
        ..TrainConfig::filter_learning()
    })
    .unwrap();
    // alpha* = V^T y, optimum = 0.5 |y - V V^T y|^2
    let v = specfilt::filtering::precompute_basis(&ds.p, &s.x, k).unwrap();
    let mut opt = 0.0;
    for l in 0..3 {
        let y = s.y.column(l);
        let mut resid = y.to_vec();
        for j in 0..=k {
            let vj = v.vector(l, j);
            let c: f64 = vj.iter().zip(y).map(|(a, b)| a * b).sum();
            resid.iter_mut().zip(vj).for_each(|(r, a)| *r -= c * a);
        }
        opt += 0.5 * resid.iter().map(|r| r * r).sum::<f64>();
    }
    assert!((r.final_loss - opt).abs() <= 1e-4, "{} vs {opt}", r.final_loss);
}
