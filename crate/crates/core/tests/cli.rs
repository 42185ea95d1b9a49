use std::path::{Path, PathBuf};
use std::process::Command;

use qpca::cli::{
    emit_plot_data, execute, ingest_csv, ingest_labels, read_plot_table, run, timings_path, RunConfig, Task,
};
use qpca::fixtures::{gaussian_classes, gaussian_matrix, rank_k};
use qpca::svd_decompose;
use qpca::Mode;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

#[test]
fn shipped_fixtures_match_their_generators() {
    let x = ingest_csv(&data("rank2_16x8.csv")).unwrap();
    assert_eq!(x, rank_k(16, 8, 2, 7).unwrap());
    assert_eq!(svd_decompose(&x, 0.95, 0).unwrap().selected_dim(), 2);

    let (c, z) = gaussian_classes(20, &[4.0, 4.0], 29).unwrap();
    assert_eq!(ingest_csv(&data("classes_40.csv")).unwrap(), c);
    assert_eq!(ingest_labels(&data("classes_40.labels"), 40).unwrap(), z);

    let l = ingest_csv(&data("linear_12x5.csv")).unwrap();
    assert_eq!(l, gaussian_matrix(12, 5, 41).unwrap());
    let t = ingest_labels(&data("linear_12x5.targets"), 12).unwrap();
    let w = [1.0, -2.0, 0.5, 3.0, -1.0];
    for (i, ti) in t.iter().enumerate() {
        let want: f64 = l.row(i).iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((ti - want).abs() <= 1e-12);
    }
    assert!(ingest_labels(&data("classes_40.labels"), 39).is_err());
}

#[test]
fn compress_identity_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(Task::Compress, dir.path().join("r.json"));
    cfg.input = Some(data("identity_4x4.csv"));
    cfg.theta = 0.7;
    let r = execute(&cfg).unwrap().report;
    let c = r.compression.unwrap().result;
    assert!(c.fidelity >= 1.0 - 1e-9);
    assert_eq!(c.d, 3);
    assert_eq!(c.variance_captured, 3.0 / 4.0);
}

#[test]
fn ledger_gate_count_grows_linearly_in_d() {
    let dir = tempfile::tempdir().unwrap();
    let step32 = |d: usize| {
        let mut cfg = RunConfig::new(Task::Ledger, dir.path().join("l.json"));
        cfg.rows = Some(64);
        cfg.cols = Some(32);
        cfg.dim = Some(d);
        cfg.eps_lambda = Some(0.1);
        cfg.eps_beta = 0.01;
        execute(&cfg).unwrap().report.ledger.unwrap().step32_gates
    };
    assert!(step32(8) / step32(4) >= 2.0);
}

fn sampled_compress(dir: &Path, name: &str) -> RunConfig {
    let mut cfg = RunConfig::new(Task::Compress, dir.join(name));
    cfg.input = Some(data("rank2_16x8.csv"));
    cfg.mode = Mode::Sampled;
    cfg.shots = 20_000;
    cfg.seed = 9;
    cfg
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = sampled_compress(dir.path(), "a.json");
    run(&a).unwrap();
    let ra = std::fs::read(&a.out).unwrap();
    run(&a).unwrap();
    assert_eq!(ra, std::fs::read(&a.out).unwrap());
    assert!(timings_path(&a.out).exists());

    let mut c = a.clone();
    c.seed = 10;
    run(&c).unwrap();
    assert_ne!(ra, std::fs::read(&c.out).unwrap());
}

#[test]
fn plot_tables_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(Task::Compress, dir.path().join("r.json"));
    cfg.input = Some(data("rank2_16x8.csv"));
    let r = execute(&cfg).unwrap().report;
    let plots = dir.path().join("plots");
    emit_plot_data(&r, &plots).unwrap();

    let scree = read_plot_table(&plots.join("scree.dat")).unwrap();
    assert_eq!(scree.len(), 8);
    for (row, (j, l)) in scree.iter().zip(&r.plots.scree) {
        assert_eq!(row[0], *j as f64);
        assert!((row[1] - l).abs() <= 1e-12);
    }

    let inf = read_plot_table(&plots.join("infidelity_vs_eps.dat")).unwrap();
    assert_eq!(inf.len(), r.plots.infidelity_vs_eps.len());
    assert_eq!(inf[0][0], 0.0);
    assert!(inf[0][5] <= 1e-9);
    for (row, want) in inf.iter().zip(&r.plots.infidelity_vs_eps) {
        let w = [
            want.eps_beta,
            want.eps,
            want.mean_deviation,
            want.max_deviation,
            want.mean_infidelity,
            want.max_infidelity,
        ];
        for (a, b) in row.iter().zip(w) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    let succ = read_plot_table(&plots.join("success_vs_d.dat")).unwrap();
    assert!(!succ.is_empty());
    for (row, want) in succ.iter().zip(&r.plots.success_vs_d) {
        let w = [
            want.d as f64,
            want.success_probability,
            want.rotation_constant,
            want.variance_captured,
        ];
        for (a, b) in row.iter().zip(w) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn applications_run_on_shipped_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(Task::Qsvm, dir.path().join("s.json"));
    cfg.input = Some(data("classes_40.csv"));
    cfg.labels = Some(data("classes_40.labels"));
    let s = execute(&cfg).unwrap().report.qsvm.unwrap();
    assert_eq!(s.original_accuracy, s.compressed_accuracy);
    assert!(s.queries.iter().all(|q| q.consistent));

    let mut cfg = RunConfig::new(Task::Qlr, dir.path().join("l.json"));
    cfg.input = Some(data("linear_12x5.csv"));
    cfg.labels = Some(data("linear_12x5.targets"));
    cfg.theta = 1.0;
    let l = execute(&cfg).unwrap().report.qlr.unwrap();
    assert!(l.forms_agree && l.max_form_gap <= 1e-8 && l.max_space_gap <= 1e-8);
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qpca"))
}

#[test]
fn binary_writes_a_report_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let status = binary()
        .args(["--input", data("identity_4x4.csv").to_str().unwrap()])
        .args(["--theta", "0.7", "--out", out.to_str().unwrap()])
        .args(["--plot-dir", dir.path().join("p").to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["compression"]["result"]["d"], 3);
    assert_eq!(v["config"]["seed"], 0);
    assert!(dir.path().join("p").join("scree.dat").exists());
}

#[test]
fn binary_failure_is_machine_readable_and_leaves_no_report() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3,a\n").unwrap();
    let out = dir.path().join("r.json");
    let o = binary()
        .args(["--input", bad.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["error"]["code"], "PARSE_ERROR");
    assert!(v["error"]["message"].as_str().unwrap().contains("line 2"));
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);

    let o = binary().args(["--theta", "0.5", "--task", "nope"]).output().unwrap();
    assert!(!o.status.success());
}
