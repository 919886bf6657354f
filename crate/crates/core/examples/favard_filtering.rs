//! Filtering with an orthonormal basis given by its three-term recurrence.
//! With Chebyshev-like coefficients the result matches the Chebyshev basis
//! up to normalization.

use specfilt::dense::DenseMatrix;
use specfilt::filtering::{favard_filtering, fixed_basis_filtering, CoefficientMatrix, SignalMatrix};
use specfilt::graph::{build_grid_graph, normalized_adjacency, IsolatedNodes};
use specfilt::BasisKind;

fn main() -> specfilt::Result<()> {
    let g = build_grid_graph(8, 8)?;
    let p = normalized_adjacency(&g, IsolatedNodes::Reject)?;
    let x = SignalMatrix::from_vector((0..64).map(|i| ((i * 7) % 11) as f64 / 10.0).collect());
    let k = 6;

    // orthonormal Chebyshev: sqrt_beta = (sqrt(pi), sqrt(1/2), 1/2, 1/2, ...)
    let mut sb = vec![std::f64::consts::PI.sqrt(), 0.5f64.sqrt()];
    sb.resize(k + 1, 0.5);
    let sqrt_beta = DenseMatrix::from_row_major(1, k + 1, sb.clone())?;
    let gamma = DenseMatrix::zeros(1, k);
    let alpha = CoefficientMatrix::from_rows(vec![(0..=k).map(|i| 1.0 / (1 + i) as f64).collect()])?;
    let z = favard_filtering(&p, &x, &sqrt_beta, &gamma, &alpha)?;

    // same filter in the unnormalized Chebyshev basis T_k
    let norm: Vec<f64> = (0..=k)
        .map(|i| if i == 0 { 1.0 / sb[0] } else { 2.0f64.sqrt() / sb[0] })
        .collect();
    let cheb_alpha = CoefficientMatrix::from_rows(vec![alpha.row(0).iter().zip(&norm).map(|(a, c)| a * c).collect()])?;
    let zc = fixed_basis_filtering(&p, &x, &BasisKind::Chebyshev, &cheb_alpha)?;
    println!("favard vs chebyshev max difference {:.2e}", z.max_abs_diff(&zc));
    println!("first entries {:?}", &z.column(0)[..4]);
    Ok(())
}
