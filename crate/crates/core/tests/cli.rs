//! End-to-end runs of the `specfilt` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use specfilt::experiments::{two_clique_fixture, write_classification_dataset};

fn specfilt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specfilt"))
        .args(args)
        .env("SPECFILT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn filter_learn_writes_one_row_per_basis_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let args = |out: &Path| {
        vec![
            "filter-learn".to_string(),
            "--bases".into(),
            "optbasis,monomial".into(),
            "--K".into(),
            "10".into(),
            "--seed".into(),
            "7".into(),
            "--grid".into(),
            "6".into(),
            "--n-base".into(),
            "1".into(),
            "--epochs".into(),
            "50".into(),
            "--out".into(),
            s(out).into(),
        ]
    };
    let a: Vec<String> = args(&out_a);
    let o = specfilt(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out_a.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.starts_with("basis,mean,stdv,n"));

    let b: Vec<String> = args(&out_b);
    assert_eq!(code(&specfilt(&b.iter().map(String::as_str).collect::<Vec<_>>())), 0);
    let mut names: Vec<_> = fs::read_dir(&out_a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names {
        assert_eq!(fs::read(out_a.join(&name)).unwrap(), fs::read(out_b.join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn filter_learn_without_order_is_a_usage_error() {
    let o = specfilt(&["filter-learn", "--bases", "optbasis"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--K"));
}

#[test]
fn filter_learn_config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            r#"{{"schema_version":1,"command":"filter-learn","K":3,"grid":5,"n_base":1,"bases":["chebyshev"],"train":{{"max_epochs":5}},"out":"{}"}}"#,
            s(&out)
        ),
    )
    .unwrap();
    let o = specfilt(&["filter-learn", "--config", s(&cfg), "--bases", "optbasis,bernstein,favard"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("summary.csv")).unwrap().lines().count(), 4);

    fs::write(&cfg, r#"{"schema_version":1,"K":3,"typo":true}"#).unwrap();
    assert_eq!(code(&specfilt(&["filter-learn", "--config", s(&cfg)])), 2);
}

#[test]
fn verify_passes_and_injected_fault_fails() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let o = specfilt(&["verify", "--out", s(&report)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(json["worst_kappa_deviation"].as_f64().unwrap() <= 1e-6);
    assert_eq!(json["passed"], true);

    let o = specfilt(&["verify", "--n-graphs", "5", "--inject-fault", "--out", s(&report)]);
    assert_eq!(code(&o), 1);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let failed: Vec<&str> = json["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"recurrence_matches_oracle"));
}

#[test]
fn classify_toy_models_and_precomputed_path() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy");
    write_classification_dataset(&two_clique_fixture(), &data).unwrap();

    for model in ["favard", "optbasis"] {
        let out = dir.path().join(format!("{model}.json"));
        let o = specfilt(&["classify", "--data-dir", s(&data), "--model", model, "--K", "10", "--epochs", "200", "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(m["splits"][0]["test_accuracy"], 1.0, "{model}");
    }
    assert_eq!(code(&specfilt(&["classify", "--data-dir", s(&data), "--model", "wavelet", "--K", "3"])), 2);

    let basis = dir.path().join("basis.bin");
    assert_eq!(code(&specfilt(&["precompute", "--data-dir", s(&data), "--K", "6", "--out", s(&basis)])), 0);
    assert!(dir.path().join("basis.bin.json").exists());
    let direct = dir.path().join("direct.json");
    let cached = dir.path().join("cached.json");
    let base = ["classify", "--data-dir", s(&data), "--model", "optbasis-scaled", "--K", "6", "--epochs", "150"];
    assert_eq!(code(&specfilt(&[&base[..], &["--out", s(&direct)]].concat())), 0);
    let o = specfilt(&[&base[..], &["--use-precomputed", s(&basis), "--out", s(&cached)]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&direct).unwrap(), fs::read(&cached).unwrap());

    // a different graph invalidates the stored basis
    let edges = data.join("edges.txt");
    let text = fs::read_to_string(&edges).unwrap();
    fs::write(&edges, format!("{text}0 19\n")).unwrap();
    let o = specfilt(&[&base[..], &["--use-precomputed", s(&basis), "--out", s(&cached)]].concat());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn classify_needs_splits_or_random_split() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("edges.txt"), "0 1\n1 2\n2 3\n3 0\n").unwrap();
    fs::write(dir.path().join("features.csv"), "1,0\n0,1\n1,0\n0,1\n").unwrap();
    fs::write(dir.path().join("labels.csv"), "0\n1\n0\n1\n").unwrap();
    let o = specfilt(&["classify", "--data-dir", s(dir.path()), "--K", "2"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("random-split"));
    let out = dir.path().join("m.json");
    let o = specfilt(&["classify", "--data-dir", s(dir.path()), "--K", "2", "--random-split", "1", "--epochs", "5", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn spectrum_of_path3_and_oracle_cap() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("path3.txt");
    fs::write(&g, "0 1\n1 2\n").unwrap();
    let out = dir.path().join("eig.csv");
    assert_eq!(code(&specfilt(&["spectrum", "--graph", s(&g), "--out", s(&out)])), 0);
    let mu: Vec<f64> = fs::read_to_string(&out)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(mu.len(), 3);
    for (a, b) in mu.iter().zip([-1.0, 0.0, 1.0]) {
        assert!((a - b).abs() < 1e-12);
    }
    let o = specfilt(&["spectrum", "--graph", s(&g), "--out", s(&out), "--max-n", "2"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("limited"));
}
