use std::path::Path;
use std::process::{Command, Output};

use liftspec_core::spectral_set::SpectralSetJson;
use serde_json::Value;

fn liftspec(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liftspec"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("LIFTSPEC_THREADS")
        .output()
        .expect("run liftspec")
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).expect("output file")
}

fn limit_json(dir: &Path) -> SpectralSetJson {
    serde_json::from_str(&read(dir.join("limit.json"))).unwrap()
}

/// `(index, eigenvalue)` rows of a spectrum.csv.
fn spectrum_rows(dir: &Path) -> Vec<(usize, f64)> {
    let mut r = csv::Reader::from_path(dir.join("spectrum.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["index", "eigenvalue", "residual"]);
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].parse().unwrap(), rec[1].parse().unwrap())
        })
        .collect()
}

#[test]
fn limit_regular_four_is_one_interval() {
    let dir = tempfile::tempdir().unwrap();
    let out = liftspec(&["limit", "--preset", "regular:4"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lim = limit_json(dir.path());
    let edge = 2.0 * 3f64.sqrt();
    assert_eq!(lim.intervals.len(), 1);
    assert!(lim.points.is_empty());
    assert!((lim.intervals[0][0] + edge).abs() < 2e-3);
    assert!((lim.intervals[0][1] - edge).abs() < 2e-3);

    let diag = read(dir.path().join("diag.csv"));
    assert_eq!(
        diag.lines().next().unwrap(),
        "mu,rho_b_star_mu,im_trace_g_oo,iterations,residual,member"
    );
    assert!(diag.lines().count() > 100);
}

#[test]
fn limit_of_diagonal_system_is_points_only() {
    let dir = tempfile::tempdir().unwrap();
    let ws = r#"{"version": "liftspec-ws-1", "r": 3, "d": 0, "star": [],
        "a0": [[[-1.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
               [[0.0, 0.0], [0.5, 0.0], [0.0, 0.0]],
               [[0.0, 0.0], [0.0, 0.0], [2.0, 0.0]]],
        "weights": []}"#;
    let file = dir.path().join("diag.json");
    std::fs::write(&file, ws).unwrap();
    let out = liftspec(&["limit", "--ws", file.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lim = limit_json(dir.path());
    assert!(lim.intervals.is_empty());
    assert_eq!(lim.points.len(), 3);
    for (p, want) in lim.points.iter().zip([-1.0, 0.5, 2.0]) {
        assert!((p - want).abs() < 1e-3, "{p} vs {want}");
    }
}

#[test]
fn dense_and_lanczos_agree_at_shared_indices() {
    let dense = tempfile::tempdir().unwrap();
    let iter = tempfile::tempdir().unwrap();
    let args = ["spectrum", "--preset", "figure1", "--n", "40", "--seed", "9"];
    assert!(liftspec(&[&args[..], &["--method", "dense"]].concat(), dense.path()).status.success());
    assert!(liftspec(&[&args[..], &["--method", "lanczos", "--k", "5"]].concat(), iter.path())
        .status
        .success());
    let all = spectrum_rows(dense.path());
    let ext = spectrum_rows(iter.path());
    assert_eq!(all.len(), 5 * 39);
    assert_eq!(ext.len(), 10);
    for (index, value) in ext {
        let (_, want) = all[index - 1];
        assert!((value - want).abs() < 1e-6, "index {index}: {value} vs {want}");
    }
}

#[test]
fn spectrum_csv_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["spectrum", "--preset", "regular:4", "--n", "60", "--seed", "5"];
    assert!(liftspec(&args, a.path()).status.success());
    assert!(liftspec(&args, b.path()).status.success());
    assert_eq!(
        std::fs::read(a.path().join("spectrum.csv")).unwrap(),
        std::fs::read(b.path().join("spectrum.csv")).unwrap()
    );
    let c = tempfile::tempdir().unwrap();
    assert!(liftspec(&["spectrum", "--preset", "regular:4", "--n", "60", "--seed", "6"], c.path())
        .status
        .success());
    assert_ne!(read(a.path().join("spectrum.csv")), read(c.path().join("spectrum.csv")));
}

#[test]
fn tensor_writes_extremes() {
    let dir = tempfile::tempdir().unwrap();
    let out = liftspec(&["tensor", "--preset", "regular:4", "--n", "12", "--k", "2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = spectrum_rows(dir.path());
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.last().unwrap().0, 12 * 12 - 2);
    assert!(rows.iter().all(|&(_, v)| v.abs() <= 4.0 + 1e-9));
}

#[test]
fn tangle_reports_status_and_cycles() {
    let dir = tempfile::tempdir().unwrap();
    let out = liftspec(&["tangle", "--preset", "regular:4", "--n", "200", "--ell", "2"], dir.path());
    assert!(out.status.success());
    let v: Value = serde_json::from_str(&read(dir.path().join("tangle.json"))).unwrap();
    assert_eq!(v["ell"], 2);
    assert_eq!(v["d"], 4);
    assert!(v["tangle_free"].is_boolean());
    assert_eq!(v["cycles"].as_array().unwrap().len(), 4);
}

#[test]
fn experiment_report_shape_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["experiment", "--preset", "regular:4", "--n", "50", "--n", "80", "--samples", "3", "--seed", "1"];
    assert!(liftspec(&args, a.path()).status.success());
    assert!(liftspec(&args, b.path()).status.success());
    let ra = read(a.path().join("report.json"));
    assert_eq!(ra, read(b.path().join("report.json")));
    assert_eq!(read(a.path().join("diag.csv")), read(b.path().join("diag.csv")));

    let v: Value = serde_json::from_str(&ra).unwrap();
    assert_eq!(v["version"], "liftspec-report-1");
    let samples = v["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 6);
    let order: Vec<(u64, u64)> = samples
        .iter()
        .map(|s| (s["n"].as_u64().unwrap(), s["stream"].as_u64().unwrap()))
        .collect();
    assert_eq!(order, vec![(50, 0), (50, 1), (50, 2), (80, 0), (80, 1), (80, 2)]);
    for s in samples {
        assert!(s["hausdorff"].as_f64().unwrap() >= 0.0);
        assert!(s["radius_k0"].as_f64().unwrap() > 0.0);
        assert!(s["tangle_free"].is_boolean());
    }
    assert!((v["rho_b_star"].as_f64().unwrap() - 3f64.sqrt()).abs() < 1e-8);
    assert!((v["s_a_star"].as_f64().unwrap() - 2.0 * 3f64.sqrt()).abs() < 2e-3);
}

#[test]
fn experiment_sample_matches_spectrum_command() {
    let e = tempfile::tempdir().unwrap();
    let s = tempfile::tempdir().unwrap();
    assert!(
        liftspec(&["experiment", "--preset", "regular:4", "--n", "40", "--samples", "1", "--seed", "3"], e.path())
            .status
            .success()
    );
    assert!(liftspec(&["spectrum", "--preset", "regular:4", "--n", "40", "--seed", "3"], s.path())
        .status
        .success());
    let v: Value = serde_json::from_str(&read(e.path().join("report.json"))).unwrap();
    let from_report: Vec<f64> = v["samples"][0]["spectrum"]["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let from_csv: Vec<f64> = spectrum_rows(s.path()).into_iter().map(|(_, v)| v).collect();
    assert_eq!(from_report.len(), from_csv.len());
    for (a, b) in from_report.iter().zip(&from_csv) {
        assert!((a - b).abs() < 1e-10);
    }
}

/// Median Hausdorff distance to the limit set shrinks with n, and no sample
/// falls short of the limiting spectral radius by more than 0.15.
#[test]
fn regular_four_experiment_converges() {
    let dir = tempfile::tempdir().unwrap();
    let out = liftspec(
        &["experiment", "--preset", "regular:4", "--n", "500", "--n", "1000", "--n", "2000", "--samples", "3"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&read(dir.path().join("report.json"))).unwrap();
    let checks = v["checks"].as_array().unwrap();
    let find = |name: &str| checks.iter().find(|c| c["name"] == name).unwrap()["passed"].as_bool().unwrap();
    assert!(find("median_hausdorff_trend"));
    assert!(find("alon_boppana"));
    assert!(find("upper_inclusion"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(liftspec(&["limit", "--preset", "hexagon"], dir.path()).status.code(), Some(1));
    assert_eq!(liftspec(&["spectrum", "--preset", "regular:4", "--n", "1"], dir.path()).status.code(), Some(1));
    assert_eq!(
        liftspec(&["limit", "--preset", "regular:4", "--grid-step", "-1"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(liftspec(&["frobnicate"], dir.path()).status.code(), Some(1));
    let missing = dir.path().join("missing.json");
    assert_eq!(
        liftspec(&["limit", "--ws", missing.to_str().unwrap()], dir.path()).status.code(),
        Some(3)
    );
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    assert_eq!(liftspec(&["limit", "--preset", "regular:4"], &blocker).status.code(), Some(3));

    let threads = Command::new(env!("CARGO_BIN_EXE_liftspec"))
        .args(["limit", "--preset", "regular:4", "--out"])
        .arg(dir.path())
        .env("LIFTSPEC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(1));
}

#[test]
fn thread_cap_does_not_change_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path, threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_liftspec"))
            .args(["limit", "--preset", "regular:3", "--out"])
            .arg(dir)
            .env("LIFTSPEC_THREADS", threads)
            .output()
            .unwrap()
    };
    assert!(run(a.path(), "1").status.success());
    assert!(run(b.path(), "3").status.success());
    assert_eq!(read(a.path().join("diag.csv")), read(b.path().join("diag.csv")));
    assert_eq!(read(a.path().join("limit.json")), read(b.path().join("limit.json")));
}
