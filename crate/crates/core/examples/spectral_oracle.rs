//! Dense ground truth: eigendecomposition, the spectral measure of a signal,
//! Stieltjes recurrence coefficients and Hessian condition numbers.

use specfilt::basis::eval_basis;
use specfilt::dense::DenseMatrix;
use specfilt::graph::{normalized_adjacency, path_graph, IsolatedNodes};
use specfilt::oracle::{
    condition_number, exact_filter, gram_schmidt_polynomials, hessian_matrix, spectral_weight_measure, symmetric_eig,
};
use specfilt::BasisKind;

fn main() -> specfilt::Result<()> {
    let g = path_graph(12)?;
    let p = normalized_adjacency(&g, IsolatedNodes::Reject)?;
    let s = symmetric_eig(&p.to_dense())?;
    println!("eigenvalues {:?}", s.values.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());

    let x: Vec<f64> = (0..12).map(|i| 1.0 + (i as f64).cos()).collect();
    let m = spectral_weight_measure(&s, &x)?;
    println!("measure: {} support points, mass {:.4}", m.support_size(), m.total_mass());

    let k = 5;
    let rc = gram_schmidt_polynomials(&m, k)?;
    println!("sqrt_beta {:?}", rc.sqrt_beta());
    println!("gamma     {:?}", rc.gamma());

    let opt = DenseMatrix::from_rows(&s.values.iter().map(|&mu| rc.eval(k, mu)).collect::<Vec<_>>())?.transpose();
    let mono = eval_basis(&BasisKind::Monomial, k, &s.values)?;
    println!("kappa optimal  {:.6}", condition_number(&hessian_matrix(&s, &opt, &x)?)?);
    println!("kappa monomial {:.3e}", condition_number(&hessian_matrix(&s, &mono, &x)?)?);

    let low = exact_filter(&s, |lambda| (-10.0 * lambda * lambda).exp(), &x)?;
    println!("low-pass output {:?}", low.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    Ok(())
}
