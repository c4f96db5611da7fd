use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn p2_fixture() -> String {
    format!(
        "{}/../core/tests/fixtures/toy_p2",
        env!("CARGO_MANIFEST_DIR")
    )
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn arma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arma"))
        .args(args)
        .output()
        .unwrap()
}

fn run(args: &[&str]) -> i32 {
    arma_cli::run(std::iter::once("arma").chain(args.iter().copied()))
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str::<Value>(text.trim()).unwrap_or_else(|e| panic!("{e}: {text}"))["error"]
        .clone()
}

fn filtered(dir: &Path) -> Vec<(f64, f64)> {
    let mut r = csv::Reader::from_path(dir.join("filtered.csv")).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[1].parse().unwrap(), rec[2].parse().unwrap())
        })
        .collect()
}

fn filter(spec: &str) -> (i32, TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "spec.json", spec);
    let out = dir.path().join("out");
    let code = run(&[
        "filter",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        &p2_fixture(),
        "--out",
        out.to_str().unwrap(),
    ]);
    (code, dir)
}

#[test]
fn arma1_on_two_nodes_matches_the_linear_solve() {
    // L̃ of P2 swaps the nodes, so (I − a L̃) y = b x is a 2x2 system solved by Cramer's rule.
    let (a, b) = (0.5, 1.0);
    let det = 1.0 - a * a;
    let want = [b * (1.0 + a * 0.0) / det, b * (0.0 + a * 1.0) / det];
    let (code, dir) = filter(r#"{"kind": "arma1", "a": 0.5, "b": 1, "recursion": {"tol": 1e-12}}"#);
    assert_eq!(code, 0);
    let rows = filtered(&dir.path().join("out"));
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), [1.0, 0.0]);
    for (got, want) in rows.iter().zip(want) {
        assert!((got.1 - want).abs() < 1e-11, "{got:?} vs {want}");
    }
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap())
            .unwrap();
    assert!(summary["iterations"][0].as_u64().unwrap() > 1);
}

#[test]
fn identity_and_cancelling_filters_return_the_input() {
    let (code, dir) = filter(r#"{"kind": "poly", "weights": [1]}"#);
    assert_eq!(code, 0);
    assert!(filtered(&dir.path().join("out"))
        .iter()
        .all(|(x, y)| x == y));

    // (I − 0.25L)⁻¹(I − 0.25L) on the node space.
    let (code, dir) =
        filter(r#"{"kind": "rational_exact", "numerator": [1, -0.25], "denominator": [0.25, 0]}"#);
    assert_eq!(code, 0);
    assert!(filtered(&dir.path().join("out"))
        .iter()
        .all(|(x, y)| (x - y).abs() < 1e-12));
}

#[test]
fn filter_preconditions_exit_five() {
    for spec in [
        r#"{"kind": "arma1", "a": 1.0, "b": 1}"#,
        r#"{"kind": "armaK", "branches": [{"a": 0.5, "b": 1}, {"a": -1.5, "b": 1}]}"#,
        // 1 − 0.5λ vanishes at λ = 2, an eigenvalue of the P2 Laplacian.
        r#"{"kind": "rational_exact", "numerator": [1], "denominator": [0.5]}"#,
    ] {
        let (code, dir) = filter(spec);
        assert_eq!(code, 5, "{spec}");
        assert!(!dir.path().join("out").exists());
    }
    assert_eq!(filter(r#"{"kind": "sinc", "weights": [1]}"#).0, 2);
}

#[test]
fn error_json_names_the_missing_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let out = arma(&[
        "train",
        "--data",
        missing.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = error_json(&out);
    assert_eq!(err["category"], "data");
    assert_eq!(err["kind"], "io");
    assert!(err["path"]
        .as_str()
        .unwrap()
        .starts_with(missing.to_str().unwrap()));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"learning_rte": 0.1}"#);
    let invalid = write(dir.path(), "invalid.json", r#"{"dropout": 1.0}"#);
    for cfg in [bad, invalid, dir.path().join("absent.json")] {
        let out = arma(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--data",
            "synth:toy-p2",
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(2), "{cfg:?}");
        assert_eq!(error_json(&out)["category"], "config");
    }
    assert_eq!(arma(&["train", "--bogus"]).status.code(), Some(2));
}

#[test]
fn divergence_exits_four_and_keeps_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"learning_rate": 1e300, "max_epochs": 5, "patience": 5}"#,
    );
    let out_dir = dir.path().join("out");
    let out = arma(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        "synth:sbm",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_json(&out)["kind"], "diverged");
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["diverged"], true);
    assert!(out_dir.join("manifest.json").exists());
}

fn train_into(dir: &Path, cfg: &Path, name: &str, seed: &str) -> PathBuf {
    let out = dir.join(name);
    let code = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        "synth:sbm",
        "--out",
        out.to_str().unwrap(),
        "--seed",
        seed,
    ]);
    assert_eq!(code, 0);
    out
}

fn report_without_timings(dir: &Path) -> Value {
    let mut v: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    for e in v["epochs"].as_array_mut().unwrap() {
        e.as_object_mut().unwrap().remove("seconds");
    }
    v
}

#[test]
fn zero_learning_rate_run_writes_constant_curves_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"learning_rate": 0, "max_epochs": 4, "patience": 4}"#,
    );
    let out = train_into(dir.path(), &cfg, "out", "9");
    let mut r = csv::Reader::from_path(out.join("curves.csv")).unwrap();
    let losses: Vec<String> = r.records().map(|rec| rec.unwrap()[1].to_string()).collect();
    assert_eq!(losses.len(), 4);
    assert!(losses.iter().all(|l| *l == losses[0]));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["resolved_config"]["seed"], 9);
    assert_eq!(manifest["resolved_config"]["learning_rate"], 0.0);
    let mut files: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(
        files,
        ["curves.csv", "manifest.json", "model.ckpt", "report.json"]
    );
    let (params, seed) = arma_core::data::load_checkpoint(out.join("model.ckpt")).unwrap();
    assert_eq!(seed, 9);
    assert!(params.scalar_count() > 0);
}

#[test]
fn reruns_reproduce_numeric_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"dropout": 0.5, "max_epochs": 15, "patience": 15}"#,
    );
    let a = train_into(dir.path(), &cfg, "a", "3");
    let b = train_into(dir.path(), &cfg, "b", "3");
    assert_eq!(report_without_timings(&a), report_without_timings(&b));
    assert_eq!(
        fs::read(a.join("model.ckpt")).unwrap(),
        fs::read(b.join("model.ckpt")).unwrap()
    );
    let c = train_into(dir.path(), &cfg, "c", "4");
    assert_ne!(report_without_timings(&a), report_without_timings(&c));
}

fn gradcheck_rows(out: &Output) -> Vec<(String, f64)> {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[1].to_string(), rec[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn bundled_gradient_checks_pass() {
    let out = arma(&["gradcheck"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = gradcheck_rows(&out);
    let layers: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(layers, ["gcn", "cheb", "arma"]);
    assert!(rows.iter().all(|r| r.1 <= 1e-4), "{rows:?}");

    let linear = bundled("gradcheck/linear.json");
    let out = arma(&["gradcheck", "--config", linear.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let rows = gradcheck_rows(&out);
    assert!(rows[0].1 <= 1e-9, "{rows:?}");
}

#[test]
fn corrupted_backward_fails_the_gradient_check() {
    // The switch is thread-local and commands run on the calling thread.
    arma_core::autodiff::fault::set_corrupt_backward(true);
    let code = run(&["gradcheck"]);
    arma_core::autodiff::fault::set_corrupt_backward(false);
    assert_eq!(code, 5);
    assert_eq!(run(&["gradcheck"]), 0);
}

fn probe(dir: &Path, spec: &str, name: &str) -> (i32, PathBuf) {
    let cfg = write(dir, &format!("{name}.json"), spec);
    let out = dir.join(name);
    let code = run(&[
        "probe",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        "synth:sbm",
        "--feature",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    (code, out)
}

/// `(lambda, h_emp, h_analytic)` for valid rows.
fn response(path: &Path) -> Vec<(f64, f64, f64)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap())
        .filter(|rec| &rec[5] == "true")
        .map(|rec| {
            (
                rec[0].parse().unwrap(),
                rec[4].parse().unwrap(),
                rec[6].parse().unwrap(),
            )
        })
        .collect()
}

#[test]
fn probe_reports_identity_gcs_and_gcn_responses() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = probe(
        dir.path(),
        r#"{"stack": {"kind": "identity"}, "depth": 2}"#,
        "identity",
    );
    assert_eq!(code, 0);
    for t in 1..=2 {
        let rows = response(&out.join(format!("response_depth_{t}.csv")));
        assert!(rows.len() > 250);
        assert!(rows.iter().all(|r| (r.1 - 1.0).abs() < 1e-9));
    }

    let (w, v) = (0.6, 0.4);
    let (code, out) = probe(
        dir.path(),
        r#"{"stack": {"kind": "gcs", "w": 0.6, "v": 0.4}, "depth": 3}"#,
        "gcs",
    );
    assert_eq!(code, 0);
    let limit = |lambda: f64| v / (1.0 - w * (1.0 - lambda));
    let gap = |t: usize| {
        response(&out.join(format!("response_depth_{t}.csv")))
            .iter()
            .map(|r| (r.1 - limit(r.0)).abs())
            .fold(0.0, f64::max)
    };
    assert!(gap(3) < gap(2) && gap(2) < gap(1));
    assert!(out.join("response_limit.csv").exists());

    let (code, out) = probe(
        dir.path(),
        r#"{"stack": {"kind": "gcn"}, "depth": 3}"#,
        "gcn",
    );
    assert_eq!(code, 0);
    let rows = response(&out.join("response_depth_3.csv"));
    let top = rows.iter().max_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
    assert!(top.0 > 1.5 && top.1 < 0.0, "{top:?}");
    assert!(rows
        .iter()
        .all(|r| (r.1 - (1.0 - r.0).powi(3)).abs() < 1e-9));
}

#[test]
fn eigendecompositions_are_cached_by_operator_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let spec = write(
        dir.path(),
        "spec.json",
        r#"{"stack": {"kind": "identity"}, "depth": 1}"#,
    );
    let probe = |name: &str| {
        Command::new(env!("CARGO_BIN_EXE_arma"))
            .env("ARMA_CACHE_DIR", &cache)
            .args([
                "probe",
                "--config",
                spec.to_str().unwrap(),
                "--data",
                "synth:sbm",
                "--out",
            ])
            .arg(dir.path().join(name))
            .output()
            .unwrap()
    };
    let first: Value = serde_json::from_slice(&probe("a").stdout).unwrap();
    let second: Value = serde_json::from_slice(&probe("b").stdout).unwrap();
    assert_eq!(first["eigen_cache_hit"], false);
    assert_eq!(second["eigen_cache_hit"], true);
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);
    assert_eq!(
        fs::read(dir.path().join("a/response_depth_1.csv")).unwrap(),
        fs::read(dir.path().join("b/response_depth_1.csv")).unwrap()
    );
}

#[test]
fn probe_over_the_dense_cap_exits_six() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "spec.json",
        r#"{"stack": {"kind": "identity"}, "depth": 1}"#,
    );
    let data = dir.path().join("big");
    let ds = arma_core::data::sbm_with_edges(&arma_core::data::EdgeBudgetConfig {
        n_nodes: arma_core::linalg::DEFAULT_DENSE_CAP + 1,
        n_edges: 2 * arma_core::linalg::DEFAULT_DENSE_CAP,
        ..Default::default()
    })
    .unwrap();
    arma_core::data::save_canonical(&ds, &data).unwrap();
    let out = arma(&[
        "probe",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(6));
    assert_eq!(error_json(&out)["kind"], "dense_cap");
}

#[test]
fn bench_writes_a_ratio_column() {
    let dir = tempfile::tempdir().unwrap();
    let suite = write(
        dir.path(),
        "suite.json",
        r#"{"graphs": [{"n_edges": 400}], "repeats": 2, "warmup": 0}"#,
    );
    let out = dir.path().join("out");
    let code = run(&[
        "--format",
        "json",
        "bench",
        "--config",
        suite.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let rows: Value =
        serde_json::from_str(&fs::read_to_string(out.join("bench.json")).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["layer"], "arma");
    assert_eq!(rows[0]["n_nodes"], 100);
    assert!(rows[0]["arma_gcn_ratio"].as_f64().unwrap() > 0.0);
    assert!(rows[1]["arma_gcn_ratio"].is_null());
    assert!(rows
        .iter()
        .all(|r| r["epoch_ms_median"].as_f64().unwrap() > 0.0));
}

#[test]
fn validate_reports_loader_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("p2");
    arma_core::data::save_canonical(&arma_core::data::toy_p2(), &data).unwrap();
    assert_eq!(run(&["validate", "--data", data.to_str().unwrap()]), 0);
    let edges = data.join("edges.csv");
    let mut text = fs::read_to_string(&edges).unwrap();
    text.push_str("1,0,2.0\n");
    fs::write(&edges, text).unwrap();
    let out = arma(&["validate", "--data", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["kind"], "checksum");
}

#[test]
fn bundled_example_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for dir in ["train", "gradcheck"] {
        for entry in fs::read_dir(root.join(dir)).unwrap() {
            let text = fs::read_to_string(entry.unwrap().path()).unwrap();
            serde_json::from_str::<arma_core::train::ModelConfig>(&text).unwrap();
        }
    }
    let data = tempfile::tempdir().unwrap();
    for (dir, cmd) in [("filter", "filter"), ("probe", "probe")] {
        for entry in fs::read_dir(root.join(dir)).unwrap() {
            let path = entry.unwrap().path();
            let out = data.path().join(path.file_stem().unwrap());
            let code = run(&[
                cmd,
                "--config",
                path.to_str().unwrap(),
                "--data",
                "synth:toy-p2",
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(code, 0, "{path:?}");
        }
    }
}
