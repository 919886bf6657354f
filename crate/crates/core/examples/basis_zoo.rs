//! Evaluates the classical bases on a few points and filters one signal
//! with each of them.

use specfilt::basis::eval_basis;
use specfilt::filtering::{fixed_basis_filtering, CoefficientMatrix, SignalMatrix};
use specfilt::graph::{build_grid_graph, normalized_adjacency, IsolatedNodes};
use specfilt::BasisKind;

fn main() -> specfilt::Result<()> {
    let kinds = ["monomial", "chebyshev", "legendre", "jacobi(1,0.5)", "bernstein"];
    let points = [-1.0, -0.5, 0.0, 0.5, 1.0];
    for name in kinds {
        let kind: BasisKind = name.parse()?;
        // Bernstein is defined on lambda = 1 - mu in [0, 2]
        let at: Vec<f64> = match kind {
            BasisKind::Bernstein => points.iter().map(|mu| 1.0 - mu).collect(),
            _ => points.to_vec(),
        };
        let v = eval_basis(&kind, 3, &at)?;
        println!("{name}: degree-3 member at mu = {points:?} -> {:?}", (0..points.len()).map(|j| format!("{:.3}", v[(3, j)])).collect::<Vec<_>>());
    }

    let g = build_grid_graph(6, 6)?;
    let p = normalized_adjacency(&g, IsolatedNodes::Reject)?;
    let x = SignalMatrix::from_vector((0..36).map(|i| (i % 6) as f64).collect());
    let alpha = CoefficientMatrix::from_rows(vec![vec![0.4, 0.3, 0.2, 0.1]])?;
    for name in kinds {
        let z = fixed_basis_filtering(&p, &x, &name.parse()?, &alpha)?;
        let norm = z.column(0).iter().map(|v| v * v).sum::<f64>().sqrt();
        println!("{name:>14}: |z| = {norm:.4}");
    }
    Ok(())
}
