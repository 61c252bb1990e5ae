use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bchlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bchlab"))
        .args(args)
        .env_remove("BCHLAB_OUT")
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

fn report(dir: &Path) -> Value {
    let text = std::fs::read_to_string(dir.join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let idx = rdr.headers().unwrap().iter().position(|h| h == name).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn portrait_writes_orbits_through_saddle_and_crest() {
    let dir = tempfile::tempdir().unwrap();
    let o = bchlab(&["portrait", "--b", "1", "--c", "2", "--kappa", "0.4", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let hom = dir.path().join("homoclinic.csv");
    let phi = column(&hom, "phi");
    let lo = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!((lo - 0.4).abs() < 1e-12);
    assert!((hi - 1.888).abs() < 1e-3);
    for i in 0..7 {
        assert!(dir.path().join(format!("orbit_{i:02}.csv")).exists());
    }
    let centre = column(&dir.path().join("orbit_00.csv"), "phi");
    assert_eq!(centre.len(), 1);
    assert!((centre[0] - 1.6).abs() < 1e-12);
    assert_eq!(report(dir.path())["passed"], Value::Bool(true));
}

#[test]
fn portrait_for_each_b_closes() {
    for b in ["0.7", "1", "1.4"] {
        let dir = tempfile::tempdir().unwrap();
        let o = bchlab(&["portrait", "--b", b, "--c", "2", "--kappa", "0.5", "--fast", "--out", &out_arg(dir.path())]);
        assert_eq!(o.status.code(), Some(0), "b = {b}");
        let psi = column(&dir.path().join("homoclinic.csv"), "psi");
        assert!(psi.first().unwrap().abs() < 1e-6 && psi.last().unwrap().abs() < 1e-6);
    }
}

#[test]
fn criterion_sweep_is_negative_on_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = bchlab(&["criterion", "--sweep", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let csv_path = dir.path().join("sweep.csv");
    let header = std::fs::read_to_string(&csv_path).unwrap();
    assert!(header.starts_with("h,Qcal,dQcal_dh\n"));
    let d = column(&csv_path, "dQcal_dh");
    assert_eq!(d.len(), 19);
    assert!(d.iter().all(|&v| v < 0.0));
    let verdict: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["criterion_holds"], Value::Bool(true));
    assert_eq!(verdict["grid"].as_array().unwrap().len(), 19);
}

#[test]
fn verify_all_fast_passes_and_records_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = bchlab(&["verify-all", "--fast", "--seed", "7", "--out", &out_arg(dir.path())]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS [")).count(), 5);
    let r = report(dir.path());
    assert_eq!(r["seed"], 7);
    assert_eq!(r["passed"], Value::Bool(true));
}

#[test]
fn inadmissible_kappa_exits_2_and_names_the_inequality() {
    let dir = tempfile::tempdir().unwrap();
    let o = bchlab(&["profile", "--c", "2", "--kappa", "1.2", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kappa < c/(b+1)"));
    let o = bchlab(&["profile", "--kappa", "-0.1", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kappa > 0"));
}

#[test]
fn other_invalid_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    assert_eq!(bchlab(&["spectrum", "--b", "1.4", "--kappa", "0.5", "--out", &out]).status.code(), Some(2));
    assert_eq!(bchlab(&["profile", "--n", "1000", "--out", &out]).status.code(), Some(2));
    assert_eq!(bchlab(&["evolve", "--epsilon", "0.5", "--out", &out]).status.code(), Some(2));
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"kapa": 0.4}"#).unwrap();
    assert_eq!(bchlab(&["profile", "--config", cfg.to_str().unwrap(), "--out", &out]).status.code(), Some(2));
    assert_eq!(bchlab(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"c": 3.0, "kappa": 0.3, "seed": 11}"#).unwrap();
    let out = dir.path().join("o");
    let o = bchlab(&["portrait", "--fast", "--config", cfg.to_str().unwrap(), "--kappa", "0.5", "--out", &out_arg(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["config"]["params"]["c"], 3.0);
    assert_eq!(r["config"]["params"]["kappa"], 0.5);
    assert_eq!(r["seed"], 11);
}

#[test]
fn output_directory_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_bchlab"))
        .args(["criterion"])
        .env("BCHLAB_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("criterion.json").exists());
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn failed_check_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.json");
    std::fs::write(&cfg, r#"{"tolerances": {"drift": 1e-30}}"#).unwrap();
    let out = dir.path().join("o");
    let o = bchlab(&[
        "evolve", "--n", "1024", "--domain-length", "40", "--t-final", "0.5",
        "--config", cfg.to_str().unwrap(), "--out", &out_arg(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL conservation"), "{stdout}");
    assert!(stdout.contains("relative drift of conserved quantities"));
    assert_eq!(report(&out)["passed"], Value::Bool(false));
}

#[test]
fn identical_config_gives_identical_csv() {
    let run = |dir: &Path| {
        let o = bchlab(&[
            "evolve", "--n", "1024", "--domain-length", "40", "--t-final", "1", "--epsilon", "0.01",
            "--seed", "3", "--out", &out_arg(dir),
        ]);
        assert!(o.status.code().is_some());
        std::fs::read(dir.join("trace.csv")).unwrap()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(a.path()), run(b.path()));

    let sweep = |dir: &Path| {
        bchlab(&["criterion", "--sweep", "--jobs", "3", "--out", &out_arg(dir)]);
        std::fs::read(dir.join("sweep.csv")).unwrap()
    };
    assert_eq!(sweep(a.path()), sweep(b.path()));
}

#[test]
fn spectrum_fast_writes_eigenfunctions() {
    let dir = tempfile::tempdir().unwrap();
    let o = bchlab(&["spectrum", "--fast", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let psi0 = column(&dir.path().join("eigenfunctions.csv"), "psi0");
    assert_eq!(psi0.len(), 2048);
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("spectrum.json")).unwrap()).unwrap();
    assert_eq!(summary["negative_count"], 1);
}

#[test]
fn profile_writes_csv_with_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let o = bchlab(&["profile", "--n", "1024", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let text = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    let first = text.lines().nth(1).unwrap();
    let digits: usize = first.split(',').next().unwrap().split('e').next().unwrap().chars().filter(char::is_ascii_digit).count();
    assert_eq!(digits, 17);
}
