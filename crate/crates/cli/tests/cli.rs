use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mmcool_cli::RunReport;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mmcool"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_to(dir: &Path, args: &[&str]) -> RunReport {
    let out = bin().args(args).arg("--out").arg(dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sub = args[0];
    serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{sub}.json"))).unwrap()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn empty_config_names_missing_sections() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.toml");
    std::fs::write(&empty, "").unwrap();
    let out = run(&["steady", path(&empty)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for s in ["optical", "mechanical", "coupling", "bath"] {
        assert!(err.contains(s), "{err}");
    }
    let out = run(&["membrane", path(&empty)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("membrane, cavity, spot, drum_mode"));
}

#[test]
fn unknown_subcommand_prints_usage() {
    let out = run(&["plot", "x.toml"]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn numerical_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("unstable.toml");
    // Blue-detuned drive far above the damping: the steady state does not exist.
    let text = std::fs::read_to_string(config("single_drive.toml"))
        .unwrap()
        .replace("detuning = 20.0", "detuning = -20.0")
        .replace("strengths = [0.05]", "strengths = [0.5]");
    std::fs::write(&cfg, text).unwrap();
    let out = run(&["steady", path(&cfg)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn membrane_matches_reference_couplings() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_to(dir.path(), &["membrane", path(&config("membrane.toml"))]);
    assert!(dir.path().join("membrane_coupling_magnitude.csv").exists());
    let hz = report.scalars["kappa_over_2pi_hz"];
    assert!((hz - 0.968e6).abs() < 1e3, "{hz}");
    let out = run(&[
        "compare",
        path(&dir.path().join("membrane.json")),
        path(&config("golden/membrane_couplings.json")),
        "--floor",
        "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn csv_payloads_are_deterministic() {
    for (sub, cfg) in [("steady", "dual_drive.toml"), ("eigen", "single_drive.toml"), ("membrane", "membrane.toml")] {
        let a = run(&[sub, path(&config(cfg))]);
        let b = run(&[sub, path(&config(cfg))]);
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout, "{sub}");
    }
}

#[test]
fn golden_self_comparison_and_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_to(dir.path(), &["steady", path(&config("dual_drive.toml"))]);
    let own = dir.path().join("steady.json");
    let out = run(&["compare", path(&own), path(&own), "--tol", "0"]);
    assert!(out.status.success());

    let mut perturbed = report.clone();
    *perturbed.scalars.get_mut("n_tot").unwrap() *= 1.1;
    let golden = dir.path().join("perturbed.json");
    std::fs::write(&golden, serde_json::to_string(&perturbed).unwrap()).unwrap();
    let out = run(&["compare", path(&own), path(&golden), "--tol", "0.05"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("n_tot") && !err.contains("gamma_total"), "{err}");
}

#[test]
fn golden_schema_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    run_to(dir.path(), &["steady", path(&config("dual_drive.toml"))]);
    let out = run(&["compare", path(&dir.path().join("steady.json")), path(&config("golden/membrane_couplings.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));
}

#[test]
fn steady_agrees_with_weak_coupling_form() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_to(dir.path(), &["steady", path(&config("dual_drive.toml"))]);
    assert!((report.scalars["gamma_total"] - 0.05).abs() < 1e-12);
    assert!(report.scalars["weak_coupling_relative_difference"].abs() < 0.05);
    assert_eq!(report.tables["sweep"].rows.len(), 41);
    assert!(report.flags.iter().any(|f| f.name == "weak_coupling" && f.holds));
}

#[test]
fn steps_flag_sets_sweep_resolution() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_to(dir.path(), &["eigen", path(&config("dual_drive.toml")), "--steps", "101"]);
    assert_eq!(report.tables["branches"].rows.len(), 101);
    assert!(report.scalars["exceptional_points"] >= 2.0);
}

#[test]
fn schedule_paths_agree() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_to(
        dir.path(),
        &[
            "schedule",
            path(&config("membrane.toml")),
            "--protocol",
            path(&config("protocols/membrane_sequential.toml")),
            "--against",
            path(&config("protocols/membrane_simultaneous.toml")),
        ],
    );
    assert!(report.scalars["path_relative_difference"] < 1e-8);
    assert!(report.scalars["max_final_schmidt"] < 1.0);
}

#[test]
fn detuning_sweep_finds_the_mechanical_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_to(dir.path(), &["sweep", path(&config("detuning_scan.toml")), "--threads", "2"]);
    assert!((report.scalars["argmin"] - 20.0).abs() < 0.01);
}

#[test]
fn evolve_approaches_the_steady_state() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_to(dir.path(), &["evolve", path(&config("decay.toml"))]);
    let t = &report.tables["trajectory"];
    assert_eq!(t.columns[..2], ["t".to_owned(), "n_tot".to_owned()]);
    assert!(report.scalars["final_n_tot"] < 1e-2 * report.scalars["n_th"]);
}

#[test]
fn json_format_writes_a_single_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["limits", path(&config("dual_drive.toml")), "--format", "json", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files, vec![std::ffi::OsString::from("limits.json")]);

    let out = run(&["limits", path(&config("dual_drive.toml")), "--format", "json"]);
    let report: RunReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.subcommand, "limits");
    assert_eq!(report.tables["quantum_limit"].rows.len(), 2);
}
