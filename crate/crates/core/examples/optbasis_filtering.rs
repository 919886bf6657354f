//! Optimal-basis filtering on a small random graph: basis vectors are
//! orthonormal and the accompanying recurrence is recovered on the fly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use specfilt::filtering::{optbasis_filtering, CoefficientMatrix, SignalMatrix};
use specfilt::graph::{normalized_adjacency, random_connected_graph, IsolatedNodes};

fn main() -> specfilt::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = random_connected_graph(40, 60, &mut rng)?;
    let p = normalized_adjacency(&g, IsolatedNodes::Reject)?;

    let x = SignalMatrix::from_columns(vec![
        (0..40).map(|i| (i as f64 * 0.3).sin()).collect(),
        (0..40).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect(),
    ])?;
    let alpha = CoefficientMatrix::from_rows(vec![vec![0.5, -0.2, 0.1, 0.05, 0.0, 0.3], vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]])?;
    let (z, basis) = optbasis_filtering(&p, &x, &alpha, true)?;
    let basis = basis.expect("requested");

    println!("orthonormality error {:.2e}", basis.orthonormality_error());
    for (l, rec) in basis.recurrences().iter().enumerate() {
        println!("channel {l}: sqrt_beta {:?}", rec.sqrt_beta.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
        println!("           gamma     {:?}", rec.gamma.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
        println!("           residual identity gap {:.2e}", rec.residual_gap());
    }
    // alpha = e_0 keeps only v_0 = x / |x|
    let scale = basis.recurrences()[1].sqrt_beta[0];
    let gap = z.column(1).iter().zip(x.column(1)).map(|(a, b)| (a * scale - b).abs()).fold(0.0, f64::max);
    println!("identity channel deviation {gap:.2e}");
    Ok(())
}
