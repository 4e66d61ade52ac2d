use std::fs;
use std::path::Path;

use qest::output::read_csv;
use qest_cli::{run_command, EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE};

fn run(args: &[&str]) -> i32 {
    run_command(std::iter::once("qest").chain(args.iter().copied()))
}

fn dir_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn simulate_twice_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("qubit.json");
    fs::write(&config, qest::scenario::preset_json("qubit_rabi").unwrap().to_string()).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let code = run(&[
            "simulate", "--config", dir_str(&config), "--out", dir_str(out), "--trajectories", "6", "--horizon", "1",
        ]);
        assert_eq!(code, EXIT_OK);
    }
    let fa = files(&a);
    assert_eq!(fa.len(), 6 + 2);
    assert!(fa.iter().any(|(n, _)| n == "resolved_config.json"));
    assert_eq!(fa, files(&b));
}

#[test]
fn resolved_config_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["--trajectories", "3", "--horizon", "0.5", "--seed", "9"];
    let mut first = vec!["simulate", "--preset", "two_channel", "--out", dir_str(&a)];
    first.extend(args);
    assert_eq!(run(&first), EXIT_OK);
    let resolved = a.join("resolved_config.json");
    assert_eq!(run(&["simulate", "--config", dir_str(&resolved), "--out", dir_str(&b)]), EXIT_OK);
    assert_eq!(files(&a), files(&b));
}

#[test]
fn stuck_pair_never_gains_fidelity() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["simulate", "--preset", "stuck_pair", "--out", dir_str(tmp.path())]), EXIT_OK);
    let (header, rows) = read_csv(&fs::read_to_string(tmp.path().join("traj_0.csv")).unwrap()).unwrap();
    assert_eq!(header[1], "fidelity");
    assert!(!rows.is_empty());
    for row in rows {
        assert!(row[1] <= 1e-10, "fidelity {} at t={}", row[1], row[0]);
    }
}

#[test]
fn cycle_and_ensemble_write_results() {
    let tmp = tempfile::tempdir().unwrap();
    let c = tmp.path().join("c");
    assert_eq!(
        run(&["cycle", "--preset", "qubit_rabi", "--trajectories", "2", "--horizon", "0.2", "--out", dir_str(&c)]),
        EXIT_OK
    );
    assert!(c.join("traj_1.csv").exists());

    let e = tmp.path().join("e");
    let code = run(&[
        "ensemble", "--preset", "ensemble_n100", "--trajectories", "2", "--horizon", "0.2", "--copies", "2",
        "--compare-seeds", "2", "--out", dir_str(&e),
    ]);
    assert_eq!(code, EXIT_OK);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(e.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n_copies"], 2);
    assert!(report["comparison"]["max_deviation_true"].as_f64().unwrap() <= 0.05);
}

#[test]
fn verify_qubit_rabi_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let code = run(&["verify", "--preset", "qubit_rabi", "--trajectories", "200", "--out", dir_str(tmp.path())]);
    assert_eq!(code, EXIT_OK);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["checks"].as_array().unwrap().len() >= 8);
}

#[test]
fn usage_and_config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dir_str(tmp.path());
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&["simulate", "--out", out]), EXIT_USAGE);
    assert_eq!(run(&["simulate", "--preset", "no_such", "--out", out]), EXIT_USAGE);
    assert_eq!(run(&["simulate", "--config", "/definitely/missing.json", "--out", out]), EXIT_USAGE);
    assert_eq!(run(&["simulate", "--preset", "qubit_rabi", "--dt", "0.5", "--out", out]), EXIT_USAGE);

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"dimension": 2, "rho0": "basis_0", "channels": [{"obs": "sigma_z", "gamma": 1, "eta": 1.5}]}"#)
        .unwrap();
    assert_eq!(run(&["simulate", "--config", dir_str(&bad), "--out", out]), EXIT_USAGE);
}

#[test]
fn exit_codes_are_distinct() {
    assert_ne!(EXIT_CHECK_FAILED, EXIT_USAGE);
    assert_ne!(EXIT_OK, EXIT_CHECK_FAILED);
}
