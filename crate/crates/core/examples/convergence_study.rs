//! Long training runs without early stopping: learnable recurrences tend to
//! produce loss spikes, the optimal basis converges fastest.

use specfilt::experiments::{make_filter_dataset, run_convergence_study, standard_combinations};
use specfilt::train::TrainConfig;
use specfilt::BasisKind;

fn main() -> specfilt::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2000);
    let ds = make_filter_dataset(16, 16, 1, &standard_combinations(), 0)?;
    let bases: Vec<BasisKind> = vec!["optbasis".parse()?, "favard".parse()?, "monomial".parse()?];
    let curves = run_convergence_study(&ds.p, &ds.samples[0], &bases, 10, epochs, &TrainConfig::filter_learning())?;
    let mono_final = *curves[2].losses.last().expect("non-empty");
    for c in &curves {
        println!(
            "{:>9}: final {:.4e}, {} spikes, reaches monomial's final loss at epoch {:?}",
            c.basis,
            c.losses.last().expect("non-empty"),
            c.bumps.len(),
            c.first_epoch_at_or_below(mono_final)
        );
    }
    Ok(())
}
