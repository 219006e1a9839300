use std::fs;
use std::path::{Path, PathBuf};

use revsle_core::cli::{dispatch, RunManifest};

fn run(out: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["revsle".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.push("--out".into());
    argv.push(out.display().to_string());
    dispatch(argv)
}

fn run_dirs(out: &Path, prefix: &str) -> Vec<PathBuf> {
    let mut dirs: Vec<_> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .collect();
    dirs.sort();
    dirs
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(dispatch(["revsle"].map(String::from)), 2);
    assert_eq!(dispatch(["revsle", "no-such-command"].map(String::from)), 2);
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), &["cft-table", "--kappa", "4,abc"]), 2);
    assert_eq!(run(tmp.path(), &["cft-table", "--kappa", "-1"]), 2);
    assert_eq!(run(tmp.path(), &["martingale-test", "--kappa", "2,4"]), 2);
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(run(tmp.path(), &["exponents", "--config", bad.to_str().unwrap()]), 2);
    let unknown = tmp.path().join("unknown.json");
    fs::write(&unknown, r#"{"kappa": 4.0, "colour": "red"}"#).unwrap();
    assert_eq!(
        run(tmp.path(), &["exponents", "--config", unknown.to_str().unwrap()]),
        2
    );
    assert_eq!(
        run(tmp.path(), &["exponents", "--config", "/nonexistent/config.json"]),
        2
    );
}

#[test]
fn virasoro_check_at_kappa_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), &["virasoro-check", "--kappa", "2"]), 0);
    let dir = &run_dirs(tmp.path(), "virasoro-check-")[0];
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["w_eigenvalue_num"], -2);
    assert_eq!(report["w_eigenvalue_den"], 1);
    assert_eq!(report["matches_formula"], true);
    let m = manifest(dir);
    assert_eq!(m.subcommand, "virasoro-check");
    assert!(m.outputs.contains(&"report.json".to_string()));
    assert!(dir
        .file_name()
        .unwrap()
        .to_string_lossy()
        .ends_with(&m.config_digest[..12]));
}

#[test]
fn cft_table_sums_to_26() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), &["cft-table", "--kappa", "4,6"]), 0);
    let dir = &run_dirs(tmp.path(), "cft-table-")[0];
    let mut reader = csv::Reader::from_path(dir.join("table.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let sum = headers.iter().position(|h| h == "sum").unwrap();
    let rows: Vec<_> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert_eq!(row[sum].parse::<f64>().unwrap(), 26.0);
    }
}

#[test]
fn reruns_reproduce_data_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["inverse-check", "--samples", "20", "--steps", "100", "--seed", "5"];
    assert_eq!(run(tmp.path(), &[&args[..], &["--workers", "1"]].concat()), 0);
    let dir = run_dirs(tmp.path(), "inverse-check-").remove(0);
    let first = fs::read(dir.join("errors.csv")).unwrap();
    assert_eq!(run(tmp.path(), &[&args[..], &["--workers", "3"]].concat()), 0);
    assert_eq!(run_dirs(tmp.path(), "inverse-check-").len(), 1);
    assert_eq!(fs::read(dir.join("errors.csv")).unwrap(), first);
    assert_eq!(manifest(&dir).master_seed, Some(5));
}

#[test]
fn martingale_verdict_sets_the_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let good = ["martingale-test", "--samples", "2000", "--steps", "100"];
    assert_eq!(run(tmp.path(), &good), 0);
    let wrong = tmp.path().join("wrong.json");
    fs::write(&wrong, r#"{"b": 2.0, "samples": 4000, "steps": 100}"#).unwrap();
    assert_eq!(
        run(tmp.path(), &["martingale-test", "--config", wrong.to_str().unwrap()]),
        1
    );
    let dirs = run_dirs(tmp.path(), "martingale-test-");
    assert_eq!(dirs.len(), 2);
    let passed: Vec<bool> = dirs.iter().map(|d| manifest(d).passed).collect();
    assert!(passed.contains(&true) && passed.contains(&false));
    for d in &dirs {
        let csv = fs::read_to_string(d.join("report.csv")).unwrap();
        assert!(csv.starts_with("t,mean,stderr,z,n_alive,n_stopped\n"));
    }
}

#[test]
fn every_subcommand_writes_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["simulate-forward", "--steps", "50"],
        &["simulate-backward", "--steps", "50"],
        &["trace", "--steps", "50"],
        &["radial", "--steps", "20"],
        &["exponents", "--kappa", "8/3", "--weight", "-0.5"],
        &["composed", "--steps", "50", "--samples", "20", "--shared"],
    ];
    for args in cases {
        assert_eq!(run(tmp.path(), args), 0, "{args:?}");
        let dir = &run_dirs(tmp.path(), &format!("{}-", args[0]))[0];
        let m = manifest(dir);
        assert_eq!(m.subcommand, args[0]);
        for out in &m.outputs {
            assert!(dir.join(out).is_file(), "{out}");
        }
    }
    let trace = &run_dirs(tmp.path(), "trace-")[0];
    let text = fs::read_to_string(trace.join("trace.csv")).unwrap();
    assert!(text.starts_with("t,re_gamma,im_gamma\n"));
    assert_eq!(text.lines().count(), 52);
}

#[test]
fn zero_horizon_runs() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        run(tmp.path(), &["inverse-check", "--horizon", "0", "--samples", "5"]),
        0
    );
    assert_eq!(run(tmp.path(), &["simulate-backward", "--horizon", "0"]), 0);
}
