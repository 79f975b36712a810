use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use dirichlet_reg_cli::manifest::RunManifest;
use dirichlet_reg_core::levyexponent::RecoveredTriplet;
use serde_json::Value;
use tempfile::TempDir;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> PathBuf {
    root().join("configs").join(name)
}

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dirichlet-reg")).args(args).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

fn run_cfg(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let (code, text) = run(&args);
    eprintln!("{text}");
    code
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn schema_is_printed() {
    let (code, text) = run(&["schema"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["title"], "ExperimentConfig");
}

#[test]
fn heaviside_bracket_is_exact() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run_cfg("qv", &config("heaviside_qv.json"), tmp.path(), &[]), 0);
    let v = json(&tmp.path().join("qv.json"));
    assert_eq!(v["limit_at_end"], 1.0);
    assert_eq!(v["continuous_at_end"], 0.0);
    assert_eq!(v["converged"], true);
}

#[test]
fn white_noise_does_not_converge() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run_cfg("qv", &config("white_noise_qv.json"), tmp.path(), &[]), 3);
    assert_eq!(json(&tmp.path().join("qv.json"))["converged"], false);
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let bad = write_config(tmp.path(), r#"{"model": {"type": "brownian_motion", "sigma": 1.0}, "sead": 3}"#);
    assert_eq!(run_cfg("simulate", &bad, &tmp.path().join("a"), &[]), 2);
    let missing = write_config(tmp.path(), r#"{"input": {"path": "nowhere.csv"}}"#);
    assert_eq!(run_cfg("qv", &missing, &tmp.path().join("b"), &[]), 2);
    let schedule = write_config(tmp.path(), r#"{"model": {"type": "brownian_motion", "sigma": 1.0}, "schedule": [1, 2]}"#);
    assert_eq!(run_cfg("qv", &schedule, &tmp.path().join("c"), &[]), 2);
    assert_eq!(run_cfg("residual", &config("bm.json"), &tmp.path().join("d"), &["--paths", "10"]), 2);
}

#[test]
fn refuses_foreign_output_directory() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("notes.txt"), "keep me").unwrap();
    assert_eq!(run_cfg("simulate", &config("bm.json"), tmp.path(), &["--paths", "2"]), 2);
    assert_eq!(fs::read_to_string(tmp.path().join("notes.txt")).unwrap(), "keep me");
}

#[test]
fn rerun_replaces_previous_outputs() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run_cfg("simulate", &config("bm.json"), tmp.path(), &["--paths", "5"]), 0);
    assert_eq!(run_cfg("simulate", &config("bm.json"), tmp.path(), &["--paths", "2"]), 0);
    assert_eq!(fs::read_dir(tmp.path().join("paths")).unwrap().count(), 2);
}

#[test]
fn output_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("env-out");
    let status = Command::new(env!("CARGO_BIN_EXE_dirichlet-reg"))
        .args(["simulate", "--config", config("bm.json").to_str().unwrap(), "--paths", "1"])
        .env("DIRICHLET_REG_OUT", &out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn simulation_is_bit_identical_across_threads() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run_cfg("simulate", &config("composite.json"), &a, &["--threads", "1", "--paths", "8"]), 0);
    assert_eq!(run_cfg("simulate", &config("composite.json"), &b, &["--threads", "4", "--paths", "8"]), 0);
    let ma = RunManifest::read(&a.join("manifest.json")).unwrap();
    let mb = RunManifest::read(&b.join("manifest.json")).unwrap();
    assert_eq!(ma.output_hashes.len(), 9);
    assert_eq!(ma.output_hashes, mb.output_hashes);
}

#[test]
fn brownian_terminal_variance() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run_cfg("simulate", &config("bm.json"), tmp.path(), &[]), 0);
    assert_eq!(fs::read_dir(tmp.path().join("paths")).unwrap().count(), 100);
    let m = RunManifest::read(&tmp.path().join("manifest.json")).unwrap();
    let var = m.verdict["terminal_variance"].as_f64().unwrap();
    assert!((var - 1.0).abs() < 0.3, "variance {var}");
}

#[test]
fn drift_path_matches_polynomial() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run_cfg("simulate", &config("drift.json"), tmp.path(), &[]), 0);
    let text = fs::read_to_string(tmp.path().join("paths/path_000000.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        let t = v[0];
        assert!((v[1] - (t - 0.5 * t * t)).abs() < 1e-12, "t={t}");
        assert_eq!(v[2], 0.0);
        rows += 1;
    }
    assert_eq!(rows, 201);
}

#[test]
fn brownian_fixture_bracket_is_close_to_t() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run_cfg("qv", &config("brownian_qv.json"), tmp.path(), &[]), 0);
    let v = json(&tmp.path().join("qv.json"));
    let end = v["limit_at_end"].as_f64().unwrap();
    assert!((end - 1.0).abs() < 0.15, "[W,W]_1 = {end}");
}

#[test]
fn residual_passes_and_negative_control_fails() {
    let tmp = TempDir::new().unwrap();
    let ok = tmp.path().join("ok");
    assert_eq!(run_cfg("residual", &config("bm.json"), &ok, &["--paths", "2000"]), 0);
    let report = json(&ok.join("residual_report.json"));
    assert_eq!(report["pass"], true);
    let drift = tmp.path().join("drift");
    assert_eq!(run_cfg("residual", &config("bm.json"), &drift, &["--paths", "2000", "--inject-drift", "0.5"]), 4);
}

#[test]
fn recover_matches_fixture() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run_cfg("recover", &config("recover_atoms.json"), tmp.path(), &[]), 0);
    let rec: RecoveredTriplet = serde_json::from_value(json(&tmp.path().join("recovered.json"))).unwrap();
    let expected = json(&root().join("crates/cli/fixtures/psi_atoms_expected.json"));
    let b = expected["b"].as_f64().unwrap();
    let c = expected["c"].as_f64().unwrap();
    assert!((rec.b - b).abs() < 0.05, "b {}", rec.b);
    assert!((rec.c - c).abs() < 0.05, "c {}", rec.c);
    for atom in expected["atoms"].as_array().unwrap() {
        let (x, w) = (atom[0].as_f64().unwrap(), atom[1].as_f64().unwrap());
        let m = rec.mass(x - 0.3, x + 0.3);
        assert!((m - w).abs() < 0.05 * w.max(0.5), "mass near {x}: {m}");
    }
}

#[test]
fn decompose_and_sweep_write_tables() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path().join("d");
    let code = run_cfg("decompose", &config("jump_diffusion.json"), &d, &["--paths", "20"]);
    assert!(code == 0 || code == 3, "exit {code}");
    let ids = json(&d.join("identities.json"));
    assert_eq!(ids.as_array().unwrap().len(), 20);
    let passed = ids.as_array().unwrap().iter().filter(|r| r["bk_bracket"]["pass"] == true).count();
    assert!(passed >= 10, "{passed} of 20 paths within tolerance");
    assert_eq!(json(&d.join("manifest.json"))["verdict"]["pass"], true);
    let header = fs::read_to_string(d.join("decomposition/path_000000.csv")).unwrap();
    assert!(header.starts_with("t,x,xc,mdk,bk,large_jumps"));

    let s = tmp.path().join("s");
    assert_eq!(run_cfg("sweep", &config("sweep_bm.json"), &s, &[]), 0);
    let table = fs::read_to_string(s.join("sweep.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("path,dt,eps,quantity,value"));
    // 4 paths × 4 grids × 4 ε × 3 quantities
    assert_eq!(lines.count(), 4 * 4 * 4 * 3);
}

#[test]
fn replay_is_bit_identical_and_detects_tampering() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(run_cfg("fwdint", &config("heaviside_qv.json"), &out, &["--threads", "3"]), 0);
    let manifest = out.join("manifest.json");
    let (code, text) = run(&["replay", "--manifest", manifest.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(code, 0, "{text}");

    let mut m = RunManifest::read(&manifest).unwrap();
    m.output_hashes.insert("fwdint.csv".into(), "0".repeat(64));
    m.write(&out).unwrap();
    let (code, _) = run(&["replay", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(code, 1);
}

#[test]
fn replay_rejects_changed_input() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("x.csv");
    fs::copy(root().join("crates/cli/fixtures/heaviside.csv"), &input).unwrap();
    let cfg = write_config(tmp.path(), r#"{"input": {"path": "x.csv"}}"#);
    let out = tmp.path().join("run");
    assert_eq!(run_cfg("qv", &cfg, &out, &[]), 0);
    let text = fs::read_to_string(&input).unwrap().replace("1.0000000000000000e+00,0", "2.0000000000000000e+00,0");
    fs::write(&input, text).unwrap();
    let (code, _) = run(&["replay", "--manifest", out.join("manifest.json").to_str().unwrap()]);
    assert_eq!(code, 2);
}
