//! Any admissible recurrence defines an orthonormal family; its Gauss
//! quadrature integrates products of the family exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specfilt::oracle::gauss_quadrature;
use specfilt::RecurrenceCoefficients;

fn main() -> specfilt::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = 8;
    let sb: Vec<f64> = (0..k + 2).map(|_| rng.random_range(0.2..1.5)).collect();
    let gamma: Vec<f64> = (0..k + 1).map(|_| rng.random_range(-0.5..0.5)).collect();
    let rc = RecurrenceCoefficients::new(sb, gamma)?;
    let q = gauss_quadrature(&rc, k)?;
    println!("nodes   {:?}", q.nodes().iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    println!("weights {:?}", q.weights().iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());

    let mut worst = 0.0f64;
    for m in 0..=k {
        for n in 0..=k {
            let ip = q.inner(|x| rc.eval(k, x)[m], |x| rc.eval(k, x)[n]);
            worst = worst.max((ip - if m == n { 1.0 } else { 0.0 }).abs());
        }
    }
    println!("max |<p_m, p_n> - delta_mn| = {worst:.2e}");
    Ok(())
}
