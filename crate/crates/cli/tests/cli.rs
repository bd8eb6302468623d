use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ionprobe::model::{Drive, IonCavityParams};
use ionprobe::ramsey::{interaction_state, phase_grid, read_fringe_csv, simulate_fringe_with, Backend, RamseyOptions};
use ionprobe::reconstruction::{sso, PhotonDistribution};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ionprobe"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn simulate_vacuum_contrast() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", r#"{"schema": "ionprobe/v1"}"#);
    ok(dir.path(), &["simulate", "--config", "c.json", "--out", "f.csv"]);
    let meta = json(&dir.path().join("f.meta.json"));
    let contrast = meta["fit_exact"]["contrast"].as_f64().unwrap();
    assert!((contrast - 0.99).abs() <= 0.02, "{contrast}");
    assert_eq!(meta["meta"]["seed"], 0);
    assert_eq!(meta["meta"]["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_large_photon_number_shift() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", r#"{"schema": "ionprobe/v1", "drive": {"mean_n": 1.6}}"#);
    ok(dir.path(), &["simulate", "--config", "c.json", "--out", "f.csv"]);
    let shift = json(&dir.path().join("f.meta.json"))["fit_exact"]["phase_shift_pi"].as_f64().unwrap();
    assert!((shift - 1.12).abs() <= 0.07, "{shift}");
}

#[test]
fn sampled_fringe_carries_exact_column_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "c.json",
        r#"{"schema": "ionprobe/v1", "drive": {"mean_n": 0.8}, "trials": 250, "backend": "eliminated"}"#,
    );
    ok(dir.path(), &["simulate", "--config", "c.json", "--seed", "3", "--out", "a.csv"]);
    ok(dir.path(), &["simulate", "--config", "c.json", "--seed", "3", "--out", "b.csv"]);
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.contains("phase_pi,p_D,trials,p_D_exact"));
    assert!(text.contains("# seed 3"));
    let file = read_fringe_csv(text.as_bytes()).unwrap();
    assert_eq!(file.fringe.trials(), 250);
    for p in file.fringe.p_d() {
        let m = p * 250.0;
        assert!((m - m.round()).abs() < 1e-9);
    }

    ok(dir.path(), &["simulate", "--config", "c.json", "--seed", "4", "--out", "c.csv"]);
    assert_ne!(std::fs::read(dir.path().join("c.csv")).unwrap(), std::fs::read(dir.path().join("b.csv")).unwrap());
}

#[test]
fn fringe_csv_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", r#"{"schema": "ionprobe/v1", "drive": {"n_coh": 0.3, "n_th": 0.2}}"#);
    ok(dir.path(), &["simulate", "--config", "c.json", "--out", "f.csv"]);
    let file = read_fringe_csv(std::fs::File::open(dir.path().join("f.csv")).unwrap()).unwrap();
    let kappa = IonCavityParams::default().kappa;
    let p = IonCavityParams::default().with_drive(Drive::from_photons(0.3, 0.2, kappa).unwrap());
    let direct = simulate_fringe_with(&p, &phase_grid(51), &RamseyOptions::default()).unwrap();
    assert_eq!(file.fringe.phases(), direct.phases());
    assert_eq!(file.fringe.p_d(), direct.p_d());
}

#[test]
fn fit_reports_the_simulated_shift() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", r#"{"schema": "ionprobe/v1", "drive": {"mean_n": 0.4}}"#);
    ok(dir.path(), &["simulate", "--config", "c.json", "--out", "f.csv"]);
    ok(dir.path(), &["fit", "f.csv", "--out", "fit.json"]);
    let fit = json(&dir.path().join("fit.json"));
    let sim = json(&dir.path().join("f.meta.json"));
    let a = fit["phase_shift_pi"].as_f64().unwrap();
    let b = sim["fit_exact"]["phase_shift_pi"].as_f64().unwrap();
    assert!((a - b).abs() < 1e-9);
    assert_eq!(fit["points"], 51);
}

#[test]
fn reconstruct_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "c.json",
        r#"{"schema": "ionprobe/v1", "drive": {"mean_n": 0.8}, "backend": "eliminated",
            "reconstruction": {"starts": 2, "restarts": 1}}"#,
    );
    ok(dir.path(), &["simulate", "--config", "c.json", "--out", "f.csv"]);
    ok(dir.path(), &["reconstruct", "f.csv", "--config", "c.json", "--out", "r.json"]);
    let r = json(&dir.path().join("r.json"));
    for key in [
        "eta_rad_s",
        "delta_n_rad_s",
        "n_coh",
        "n_th",
        "p_n",
        "mean_n",
        "mandel_q",
        "log_likelihood",
        "seed",
        "iterations",
        "converged",
    ] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    let p_n: Vec<f64> = r["p_n"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let recovered = PhotonDistribution::new(p_n).unwrap();

    let kappa = IonCavityParams::default().kappa;
    let p = IonCavityParams::default().with_drive(Drive::from_mean(0.8, 0.0, kappa).unwrap());
    let truth = interaction_state(&p, &RamseyOptions::with_backend(Backend::Eliminated)).unwrap();
    let truth = PhotonDistribution::from_state(&truth).unwrap();
    let overlap = sso(&recovered, &truth);
    assert!(overlap > 0.99, "{overlap}");
}

#[test]
fn bootstrap_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "c.json",
        r#"{"schema": "ionprobe/v1", "drive": {"mean_n": 0.8}, "trials": 250, "backend": "eliminated",
            "reconstruction": {"starts": 1, "restarts": 0, "init": {"mean_n": 0.8}},
            "bootstrap": {"min_samples": 4, "max_samples": 8, "check_every": 4}}"#,
    );
    ok(dir.path(), &["simulate", "--config", "c.json", "--seed", "7", "--out", "f.csv"]);
    ok(dir.path(), &["reconstruct", "f.csv", "--config", "c.json", "--bootstrap", "--seed", "7", "--out", "a.json"]);
    ok(dir.path(), &["reconstruct", "f.csv", "--config", "c.json", "--bootstrap", "--seed", "7", "--out", "b.json"]);
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap());
    let r: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(r["seed"], 7);
    let u = &r["uncertainty"];
    assert!(u["samples"].as_u64().unwrap() >= 4);
    let mean = r["mean_n"].as_f64().unwrap();
    assert!(u["mean_n_lower"].as_f64().unwrap() <= mean && mean <= u["mean_n_upper"].as_f64().unwrap());
}

#[test]
fn sweep_rows_and_coupling_scaling() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", r#"{"schema": "ionprobe/v1", "sweep": {"mean_n": [0, 0.8, 1.6]}}"#);
    let both = String::from_utf8(ok(dir.path(), &["sweep", "--config", "c.json"]).stdout).unwrap();
    assert!(both.lines().any(|l| l.starts_with("# phase_shift_pi")));
    let rows = data_rows(&both);
    assert_eq!(rows.len(), 6);
    let shift = |t: &str, n: &str| -> f64 { rows.iter().find(|r| r[0] == t && r[1] == n).unwrap()[4].parse().unwrap() };
    assert!(shift("DP", "0").abs() < 0.01);
    assert!((shift("DP", "0.8") - 0.57).abs() < 0.07);
    assert!((shift("DP", "1.6") - 1.12).abs() < 0.07);
    let ratio = shift("DpPp", "0.8") / shift("DP", "0.8");
    assert!((ratio / (0.82 * 0.82) - 1.0).abs() < 0.05, "{ratio}");

    let one = String::from_utf8(ok(dir.path(), &["sweep", "--config", "c.json", "--transition", "DP"]).stdout).unwrap();
    assert_eq!(data_rows(&one).len(), 3);
}

#[test]
fn sweep_needs_two_values() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "c.json", r#"{"schema": "ionprobe/v1", "sweep": {"mean_n": [0.5]}}"#);
    assert_eq!(run(dir.path(), &["sweep", "--config", "c.json"]).status.code(), Some(2));
}

#[test]
fn calibrate_counts_and_photodiode() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "c.json",
        r#"{"schema": "ionprobe/v1", "detection": {"counts": 515, "v_dc": 1.2, "v_ac": 0.3}}"#,
    );
    ok(dir.path(), &["calibrate", "--config", "c.json", "--out", "cal.json"]);
    let c = json(&dir.path().join("cal.json"));
    assert_eq!(format!("{:.3}", c["mean_n"].as_f64().unwrap()), "1.000");
    assert!((c["count_rate_per_photon_hz"].as_f64().unwrap() - 38e3).abs() < 1.0);
    let pd = &c["photodiode"];
    let total = pd["n_coh"].as_f64().unwrap() + pd["n_th"].as_f64().unwrap();
    assert!((total - c["mean_n"].as_f64().unwrap()).abs() < 1e-12);
    assert!((pd["n_th"].as_f64().unwrap() / total - 0.25).abs() < 1e-12);
}

#[test]
fn strong_pull_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = String::from_utf8(ok(dir.path(), &["strong-pull"]).stdout).unwrap();
    let ratios: Vec<f64> = data_rows(&text).iter().map(|r| r.last().unwrap().parse().unwrap()).collect();
    assert_eq!(ratios.len(), 3);
    assert!((ratios[0] / 10.7 - 1.0).abs() < 0.01);
    assert!((ratios[1] / 159.0 - 1.0).abs() < 0.01);
    assert!((ratios[2] - 0.11).abs() < 0.005);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "bad.json", "{\n  \"schema\": \"ionprobe/v1\",\n  \"drive\": {\"photons\": 1}\n}");
    let out = run(dir.path(), &["simulate", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    assert_eq!(run(dir.path(), &["simulate", "--config", "missing.json"]).status.code(), Some(4));
    assert_eq!(run(dir.path(), &["fit", "missing.csv"]).status.code(), Some(4));

    std::fs::write(dir.path().join("broken.csv"), "phase_pi,p_D,trials\n0,0.5,250\n0.5,abc,250\n").unwrap();
    let out = run(dir.path(), &["fit", "broken.csv"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let flat: String = std::iter::once("phase_pi,p_D,trials\n".to_string())
        .chain((0..11).map(|k| format!("{},0.5,250\n", k as f64 * 0.2)))
        .collect();
    std::fs::write(dir.path().join("flat.csv"), flat).unwrap();
    assert_eq!(run(dir.path(), &["reconstruct", "flat.csv", "--backend", "eliminated"]).status.code(), Some(3));
}
