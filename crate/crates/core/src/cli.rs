//! Command-line front end. [`run`] parses arguments, executes one command and
//! returns the process exit code.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration or usage
//! error, 3 data error, 4 numerical error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::basis::BasisKind;
use crate::error::{Error, Result};
use crate::experiments::{
    fmt_f64, load_classification_dataset, make_filter_dataset, run_convergence_study, run_filter_learning_suite,
    run_optimality_verification, standard_combinations, write_convergence, write_suite, FilterSpec, VerifyOptions,
};
use crate::filtering::{precompute_basis, read_basis_file, read_sidecar, write_basis_file};
use crate::graph::{load_edge_list, normalized_adjacency, IsolatedNodes};
use crate::oracle::{symmetric_eig_with, EigConfig, DEFAULT_ORACLE_CAP};
use crate::train::{
    basis_tensors, tensor_to_signal, train_node_classifier, ClassificationData, ClassificationResult, ModelKind,
    TrainConfig,
};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
        Error::Data(_) | Error::Format { .. } | Error::InvalidGraph(_) | Error::Io { .. } => EXIT_DATA,
        Error::Numerical(_)
        | Error::DegenerateMeasure(_)
        | Error::DegenerateBasis { .. }
        | Error::InvalidRecurrence(_) => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Parser)]
#[command(name = "specfilt", version, about = "Spectral graph polynomial filters")]
pub struct Cli {
    /// Worker threads (falls back to SPECFILT_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Channel-wise filter learning on a synthetic grid dataset.
    FilterLearn(FilterLearnArgs),
    /// Check the optimal basis against the dense oracle on random graphs.
    Verify(VerifyArgs),
    /// Node classification on a dataset directory.
    Classify(ClassifyArgs),
    /// Precompute optimal basis vectors of the raw features.
    Precompute(PrecomputeArgs),
    /// Eigenvalues of the normalized adjacency of a graph.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Args)]
pub struct FilterLearnArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated basis names.
    #[arg(long, value_delimiter = ',')]
    pub bases: Option<Vec<String>>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub n_base: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Also run an uncapped convergence study of this many epochs on the
    /// first sample.
    #[arg(long)]
    pub convergence_epochs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 50)]
    pub n_graphs: usize,
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    #[arg(long = "K", default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Perturb the recorded recurrences so every check must fail.
    #[arg(long)]
    pub inject_fault: bool,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Basis file written by `precompute`.
    #[arg(long)]
    pub use_precomputed: Option<PathBuf>,
    /// Draw a 60/20/20 split with this seed when splits.json is absent.
    #[arg(long)]
    pub random_split: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrecomputeArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long = "K")]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
    pub max_n: usize,
}

/// JSON run configuration. Command-line flags override its fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub n_base: Option<usize>,
    #[serde(default)]
    pub filters: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub bases: Option<Vec<String>>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default, rename = "K")]
    pub k: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path, command: &str) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "{}: schema_version {} is not supported (expected {SCHEMA_VERSION})",
                path.display(),
                cfg.schema_version
            )));
        }
        if let Some(c) = &cfg.command {
            if c != command {
                return Err(Error::Config(format!("{}: config is for {c:?}, not {command:?}", path.display())));
            }
        }
        if let Some(t) = &cfg.train {
            t.validate()?;
        }
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Err(e) = init_threads(cli.threads) {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("SPECFILT_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("SPECFILT_THREADS={v:?} is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::FilterLearn(a) => filter_learn(a),
        Command::Verify(a) => verify(a),
        Command::Classify(a) => classify(a),
        Command::Precompute(a) => precompute(a),
        Command::Spectrum(a) => spectrum(a),
    }
}

fn parse_bases(names: &[String]) -> Result<Vec<BasisKind>> {
    if names.is_empty() {
        return Err(Error::Config("no bases given".into()));
    }
    names.iter().map(|s| s.parse()).collect()
}

pub const DEFAULT_BASES: [&str; 5] = ["optbasis", "chebyshev", "bernstein", "favard", "monomial"];

fn filter_learn(a: FilterLearnArgs) -> Result<i32> {
    let cfg = match &a.config {
        Some(p) => RunConfig::load(p, "filter-learn")?,
        None => RunConfig::default(),
    };
    let k = a
        .k
        .or(cfg.k)
        .ok_or_else(|| Error::Config("--K is required (flag or config \"K\")".into()))?;
    let bases = parse_bases(
        &a.bases
            .or(cfg.bases)
            .unwrap_or_else(|| DEFAULT_BASES.iter().map(|s| s.to_string()).collect()),
    )?;
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let grid = a.grid.or(cfg.grid).unwrap_or(24);
    let n_base = a.n_base.or(cfg.n_base).unwrap_or(15);
    let combos = match cfg.filters {
        Some(f) => f
            .iter()
            .map(|c| c.iter().map(|s| s.parse::<FilterSpec>()).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?,
        None => standard_combinations(),
    };
    let mut train = cfg.train.unwrap_or_else(TrainConfig::filter_learning);
    if let Some(e) = a.epochs {
        train.max_epochs = e;
    }
    if let Some(lr) = a.lr {
        train.lr = lr;
    }
    train.seed = seed;
    train.validate()?;
    let out = a.out.or(cfg.out).unwrap_or_else(|| PathBuf::from("filter-learn-out"));

    let ds = make_filter_dataset(grid, grid, n_base, &combos, seed)?;
    let result = run_filter_learning_suite(&ds, &bases, k, &train)?;
    write_suite(&result, &out)?;
    for r in &result.summary {
        println!("{:<12} mean {:.6e}  stdv {:.6e}  n {}", r.basis, r.mean, r.stdv, r.n);
    }
    if let Some(epochs) = a.convergence_epochs {
        let curves = run_convergence_study(&ds.p, &ds.samples[0], &bases, k, epochs, &train)?;
        write_convergence(&curves, &out)?;
        for c in &curves {
            println!("{:<12} {} loss increases above tolerance", c.basis, c.bumps.len());
        }
    }
    Ok(EXIT_OK)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn verify(a: VerifyArgs) -> Result<i32> {
    let report = run_optimality_verification(
        a.n_graphs,
        a.n,
        a.k,
        a.seed,
        &VerifyOptions {
            inject_fault: a.inject_fault,
        },
    )?;
    write_json(&report, &a.out)?;
    for c in &report.checks {
        let tag = if c.passed { "ok  " } else { "FAIL" };
        println!("{tag} {:<36} worst {:.3e} (tol {:.0e})", c.name, c.worst, c.tolerance);
    }
    let tag = if report.monomial_kappa_larger_everywhere { "ok  " } else { "FAIL" };
    println!("{tag} monomial_condition_number_larger");
    if report.passed {
        Ok(EXIT_OK)
    } else {
        eprintln!("verification failed; see {}", a.out.display());
        Ok(EXIT_VERIFY)
    }
}

/// Per-split entry of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub split: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub model: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub splits: Vec<SplitMetrics>,
    pub mean_test_accuracy: f64,
}

fn classify(a: ClassifyArgs) -> Result<i32> {
    let cfg = match &a.config {
        Some(p) => RunConfig::load(p, "classify")?,
        None => RunConfig::default(),
    };
    let dir = a
        .data_dir
        .or(cfg.data_dir)
        .ok_or_else(|| Error::Config("--data-dir is required".into()))?;
    let model_name = a.model.or(cfg.model).unwrap_or_else(|| "optbasis".into());
    let kind: ModelKind = model_name.parse()?;
    let k = a
        .k
        .or(cfg.k)
        .ok_or_else(|| Error::Config("--K is required (flag or config \"K\")".into()))?;
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let mut train = cfg.train.unwrap_or_else(TrainConfig::classification);
    if let Some(e) = a.epochs {
        train.max_epochs = e;
    }
    train.seed = seed;
    train.validate()?;
    if a.use_precomputed.is_some() && kind != ModelKind::OptBasisScaled {
        return Err(Error::Config(format!(
            "--use-precomputed needs --model optbasis-scaled (got {model_name})"
        )));
    }
    let out = a.out.or(cfg.out).unwrap_or_else(|| PathBuf::from("metrics.json"));

    let ds = load_classification_dataset(&dir, a.random_split)?;
    let p = normalized_adjacency(&ds.graph, IsolatedNodes::SelfLoop)?;
    let basis = match &a.use_precomputed {
        Some(path) => {
            let side = read_sidecar(path)?;
            if side.k != k {
                return Err(Error::Config(format!(
                    "{} holds order {} but K = {k} was requested",
                    path.display(),
                    side.k
                )));
            }
            let v = read_basis_file(path, Some(ds.graph.fnv_hash()))?;
            if v.n_nodes() != p.dim() || v.channels() != ds.features.cols() {
                return Err(Error::Data(format!("{} does not match the dataset shape", path.display())));
            }
            Some(basis_tensors(&v))
        }
        None => None,
    };
    let data = ClassificationData {
        p: &p,
        features: ds.features,
        labels: ds.labels,
        n_classes: ds.n_classes,
    };
    let mut splits = Vec::new();
    for (i, split) in ds.splits.iter().enumerate() {
        let r: ClassificationResult = train_node_classifier(kind.clone(), &data, split, k, basis.as_deref(), &train)?;
        println!(
            "split {i}: best epoch {} val acc {} test acc {}",
            r.best_epoch,
            fmt_f64(r.val_accuracy),
            fmt_f64(r.test_accuracy)
        );
        splits.push(SplitMetrics {
            split: i,
            best_epoch: r.best_epoch,
            best_val_loss: r.best_val_loss,
            val_accuracy: r.val_accuracy,
            test_accuracy: r.test_accuracy,
            epochs_run: r.epochs_run,
        });
    }
    let mean_test_accuracy = splits.iter().map(|s| s.test_accuracy).sum::<f64>() / splits.len() as f64;
    write_json(
        &Metrics {
            schema_version: SCHEMA_VERSION,
            model: kind.name(),
            k,
            seed,
            splits,
            mean_test_accuracy,
        },
        &out,
    )?;
    Ok(EXIT_OK)
}

fn precompute(a: PrecomputeArgs) -> Result<i32> {
    let ds = load_classification_dataset(&a.data_dir, Some(0))?;
    let p = normalized_adjacency(&ds.graph, IsolatedNodes::SelfLoop)?;
    let v = precompute_basis(&p, &tensor_to_signal(&ds.features), a.k)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_basis_file(&v, ds.graph.fnv_hash(), &a.out)?;
    println!(
        "wrote {} ({} nodes, {} channels, orders 0..={})",
        a.out.display(),
        v.n_nodes(),
        v.channels(),
        v.order()
    );
    Ok(EXIT_OK)
}

fn spectrum(a: SpectrumArgs) -> Result<i32> {
    let g = load_edge_list(&a.graph)?;
    if g.n_nodes() > a.max_n {
        return Err(Error::Config(format!(
            "graph has {} nodes; the dense eigensolver is limited to {} (raise --max-n to override)",
            g.n_nodes(),
            a.max_n
        )));
    }
    let p = normalized_adjacency(&g, IsolatedNodes::SelfLoop)?;
    let s = symmetric_eig_with(
        &p.to_dense(),
        &EigConfig {
            max_n: a.max_n,
            ..EigConfig::default()
        },
    )?;
    let mut text = String::from("index,mu,lambda\n");
    for (i, mu) in s.values.iter().enumerate() {
        text.push_str(&format!("{i},{},{}\n", fmt_f64(*mu), fmt_f64(1.0 - mu)));
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&a.out, text).map_err(|e| Error::io(&a.out, e))?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Data("x".into())), 3);
        assert_eq!(exit_code(&Error::Numerical("x".into())), 4);
        assert_eq!(run(["specfilt", "filter-learn", "--bases", "optbasis"]), 2);
        assert_eq!(run(["specfilt", "bogus"]), 2);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"schema_version":1,"K":3,"colour":"red"}"#).unwrap();
        assert!(matches!(RunConfig::load(&p, "filter-learn"), Err(Error::Config(_))));
        fs::write(&p, r#"{"schema_version":2,"K":3}"#).unwrap();
        assert!(matches!(RunConfig::load(&p, "filter-learn"), Err(Error::Config(_))));
        fs::write(&p, r#"{"schema_version":1,"K":3,"train":{"lr":0.5}}"#).unwrap();
        let c = RunConfig::load(&p, "filter-learn").unwrap();
        assert_eq!(c.train.unwrap().lr, 0.5);
    }
}
