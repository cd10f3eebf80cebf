use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kfp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kfp"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .env_remove("KFP_THREADS")
        .output()
        .expect("spawn kfp")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(dir: &Path, stem: &str) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join(format!("{stem}.json"))).unwrap()).unwrap()
}

fn csv_column(dir: &Path, stem: &str, col: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(dir.join(format!("{stem}.csv"))).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == col).unwrap_or_else(|| panic!("no column {col}"));
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}

#[test]
fn constants_identity_residuals_vanish() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfp(dir.path(), &["constants", "--dim-range", "3..8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let res = csv_column(dir.path(), "constants", "identity_residual");
    assert_eq!(res.len(), 6);
    assert!(res.iter().all(|r| r.parse::<f64>().unwrap() <= 1e-12), "{res:?}");
    let dims = csv_column(dir.path(), "constants", "dim");
    assert_eq!(dims, ["3", "4", "5", "6", "7", "8"]);
}

#[test]
fn reports_carry_schema_versions_guards_and_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let o =
        kfp(dir.path(), &["free-decay", "--dim", "5", "--t-min", "20", "--t-max", "200", "--samples", "8", "--plot"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(dir.path(), "free_decay");
    assert_eq!(v["schema"], "kfp-report");
    assert_eq!(v["schema_version"], 1);
    assert!(v["versions"]["kfp-core"].is_string() && v["versions"]["kfp-cli"].is_string());
    assert_eq!(v["parameters"]["dim"], 5);
    assert_eq!(v["guards"][0]["name"], "hermite-tail");
    assert_eq!(v["guards"][0]["ok"], true);
    let cmp = v["predicted_vs_measured"].as_array().unwrap();
    assert!(cmp.iter().any(|c| c["quantity"] == "decay exponent" && c["predicted"] == -2.5));
    let gp = std::fs::read_to_string(dir.path().join("free_decay.gp")).unwrap();
    assert!(gp.contains("'free_decay.csv'"));
    let header = std::fs::read_to_string(dir.path().join("free_decay.csv")).unwrap();
    assert!(header.starts_with("t,pairing_re,pairing_im,prediction_re,prediction_im,ratio_re,ratio_im\n"));
}

#[test]
fn identical_config_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "evolve",
        "--box",
        "8",
        "--nx",
        "64",
        "--nv",
        "16",
        "--data",
        "random",
        "--seed",
        "11",
        "--t-min",
        "0.5",
        "--t-max",
        "3",
        "--samples",
        "6",
    ];
    for d in [&a, &b] {
        let o = kfp(d.path(), &args);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["evolve.csv", "evolve.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn nonpositive_rho_exits_2_naming_the_short_range_condition() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfp(dir.path(), &["evolve", "--potential", "polynomial-decay", "--rho", "-0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("short-range condition"), "{}", stderr(&o));
    assert!(!dir.path().join("evolve.json").exists());
}

#[test]
fn wrap_guard_exits_3_after_writing_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfp(
        dir.path(),
        &["evolve", "--box", "8", "--nx", "64", "--nv", "8", "--t-min", "1", "--t-max", "10", "--samples", "5"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("wrap-around"), "{}", stderr(&o));
    let v = json(dir.path(), "evolve");
    let wrap = v["guards"].as_array().unwrap().iter().find(|g| g["name"] == "wrap-around").unwrap();
    assert_eq!(wrap["ok"], false);
}

#[test]
fn truncation_guard_exits_3_and_names_the_guard() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfp(dir.path(), &["fiber-spectrum", "--xi", "0.5", "--trunc", "16", "--count", "10"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("hermite-tail"), "{}", stderr(&o));
    assert_eq!(csv_column(dir.path(), "fiber_spectrum", "trusted").last().unwrap(), "false");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lab.toml");
    std::fs::write(&cfg, "[green-coeffs]\ndim = 5\nsamples = 20\n\n[constants]\ndim-range = \"3..4\"\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let o = kfp(dir.path(), &["--config", cfg, "green-coeffs", "--dim", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(dir.path(), "green_coeffs");
    assert_eq!(v["result"]["dim"], 4);
    assert_eq!(v["result"]["samples"], 20);
    assert_eq!(v["result"]["parity"], "even");
    let o = kfp(dir.path(), &["--config", cfg, "constants"]);
    assert!(o.status.success());
    assert_eq!(csv_column(dir.path(), "constants", "dim"), ["3", "4"]);
}

#[test]
fn config_mistakes_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[lap-scan]\nlamda = 0.3\n").unwrap();
    let o = kfp(dir.path(), &["--config", cfg.to_str().unwrap(), "lap-scan"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lamda"));
    let o = kfp(dir.path(), &["--config", "/nonexistent/lab.toml", "constants"]);
    assert_eq!(o.status.code(), Some(2));
    let o = kfp(dir.path(), &["constants", "--dim-range", "9..3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = kfp(dir.path(), &["resolvent-fit", "--route", "fiber", "--potential", "compact-bump"]);
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_kfp"))
        .args(["constants"])
        .env("KFP_THREADS", "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn checkpoint_round_trip_through_evolve() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("state.kfps");
    let ck = ck.to_str().unwrap();
    let grid = ["--box", "8", "--nx", "64", "--nv", "16", "--t-min", "0.5", "--t-max", "3", "--samples", "6"];
    let mut args = vec!["evolve", "--checkpoint", ck];
    args.extend(grid);
    let o = kfp(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(&std::fs::read(ck).unwrap()[..4], b"KFPS");
    let mut args = vec!["evolve", "--initial", ck];
    args.extend(grid);
    let o = kfp(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut args = vec!["evolve", "--initial", ck, "--nx", "32"];
    args.extend(&grid[..2]);
    let o = kfp(dir.path(), &args);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn resolvent_fit_records_branch_and_special_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfp(dir.path(), &["resolvent-fit", "--dim", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(dir.path(), "resolvent_fit");
    assert_eq!(v["result"]["route"], "fiber");
    assert!(v["result"]["branch_convention"].as_str().unwrap().contains("i sqrt(lambda)"));
    assert!(v["result"]["fit"]["condition"].as_f64().unwrap() > 0.0);
    let special = v["predicted_vs_measured"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["quantity"] == "special coefficient")
        .unwrap()
        .clone();
    assert!(special["relative_error"].as_f64().unwrap() < 1e-4, "{special}");
    assert!(v["result"]["branch_check"]["inflation"].as_f64().unwrap() > 1e3);
}

#[test]
fn grid_commands_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfp(dir.path(), &["lap-scan"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_column(dir.path(), "lap_scan", "eps").len(), 4);
    let o = kfp(dir.path(), &["high-energy-scan", "--samples", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(csv_column(dir.path(), "high_energy_scan", "resolved").iter().all(|r| r == "true"));
    let o = kfp(dir.path(), &["high-energy-scan", "--y-min", "1e3", "--y-max", "1e6", "--samples", "2"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("numerical-range"));
}

#[test]
fn acceptance_quick_runs_its_subset_and_exits_4_on_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = kfp(dir.path(), &["acceptance", "--quick"]);
    let out = String::from_utf8_lossy(&o.stdout);
    let ids: Vec<String> = csv_column(dir.path(), "acceptance", "id");
    assert_eq!(ids, ["1", "2", "3", "6", "8", "10"]);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count(), 6);
    let v = json(dir.path(), "acceptance");
    let runtime: f64 =
        v["result"]["criteria"].as_array().unwrap().iter().map(|c| c["runtime_s"].as_f64().unwrap()).sum();
    assert!(runtime < 300.0);
    let failed = !v["result"]["failed"].as_array().unwrap().is_empty();
    assert_eq!(o.status.code(), Some(if failed { 4 } else { 0 }));
    let o = kfp(dir.path(), &["acceptance", "--only", "1,3"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn help_documents_csv_columns_and_exit_codes() {
    let o = Command::new(env!("CARGO_BIN_EXE_kfp")).args(["free-decay", "--help"]).output().unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("t, pairing_re, pairing_im, prediction_re"), "{text}");
    let o = Command::new(env!("CARGO_BIN_EXE_kfp")).arg("--help").output().unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).contains("4 acceptance failure"));
}
