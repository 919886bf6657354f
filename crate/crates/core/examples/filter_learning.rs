//! Learns three-channel spectral filters on a synthetic grid dataset with
//! several bases and prints the mean final loss of each.
//!
//! `cargo run --release --example filter_learning -- [grid] [n_base] [K]`

use specfilt::experiments::{make_filter_dataset, run_filter_learning_suite, standard_combinations};
use specfilt::train::TrainConfig;
use specfilt::BasisKind;

fn main() -> specfilt::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let grid = args.first().copied().unwrap_or(16);
    let n_base = args.get(1).copied().unwrap_or(3);
    let k = args.get(2).copied().unwrap_or(10);

    let ds = make_filter_dataset(grid, grid, n_base, &standard_combinations(), 0)?;
    let bases = ["optbasis", "chebyshev", "bernstein", "favard", "monomial"]
        .iter()
        .map(|s| s.parse::<BasisKind>())
        .collect::<specfilt::Result<Vec<_>>>()?;
    let result = run_filter_learning_suite(&ds, &bases, k, &TrainConfig::filter_learning())?;
    println!("{} samples on a {grid}x{grid} grid, K = {k}", ds.samples.len());
    for row in &result.summary {
        println!("{:>10}  {:.4e} +- {:.4e}", row.basis, row.mean, row.stdv);
    }
    Ok(())
}
