use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
[solver]
alpha = 1.0
n = 128
dt = 0.01
t_end = 1.0

[solver.ic]
kind = "band_random"
k_lo = 2.0
k_hi = 6.0
seed = 11

[scales]
depth = 2
"#;

fn sqglab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqglab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn simulate(cfg: &Path, out: &Path) -> Output {
    sqglab(&["simulate", "--config", s(cfg), "--out", s(out)])
}

#[test]
fn simulate_writes_deterministic_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "tiny.toml",
        &TINY
            .replace("n = 128", "n = 64")
            .replace("depth = 2", "depth = 1")
            .replace("dt = 0.01", "dt = 0.1"),
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = simulate(&cfg, &a);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(simulate(&cfg, &b).status.success());
    let manifest = fs::read(a.join("manifest.json")).unwrap();
    assert_eq!(manifest, fs::read(b.join("manifest.json")).unwrap());
    let files = fs::read_dir(&a)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "sqgf"))
        .count();
    assert!(files >= 2);
    assert!(a.join("budget.svg").exists());
    let c = tmp.path().join("c");
    let out = sqglab(&["simulate", "--config", s(&cfg), "--out", s(&c), "--seed", "12"]);
    assert!(out.status.success());
    assert_ne!(manifest, fs::read(c.join("manifest.json")).unwrap());
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let short = write_config(tmp.path(), "short.toml", &TINY.replace("t_end = 1.0", "t_end = 0.6"));
    let out = simulate(&short, &tmp.path().join("x"));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("2T >= R0^alpha"), "{}", stderr(&out));

    let unknown = write_config(tmp.path(), "unknown.toml", &format!("{TINY}\n[cover]\nseed = 3\n"));
    let out = simulate(&unknown, &tmp.path().join("y"));
    assert_eq!(out.status.code(), Some(2));

    let out = simulate(&tmp.path().join("missing.toml"), &tmp.path().join("z"));
    assert_eq!(out.status.code(), Some(2));

    let out = sqglab(&[
        "diagnose",
        s(&tmp.path().join("nowhere")),
        "--config",
        s(&write_config(tmp.path(), "ok.toml", TINY)),
        "--slack",
        "0.9",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn diagnose_report_and_failure_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let traj = tmp.path().join("traj");
    assert!(simulate(&cfg, &traj).status.success());

    let (r1, r2) = (tmp.path().join("r1"), tmp.path().join("r2"));
    for r in [&r1, &r2] {
        let out = sqglab(&["diagnose", s(&traj), "--config", s(&cfg), "--out", s(r)]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for name in [
        "cascade_report.json",
        "cascade_report.csv",
        "locality_report.json",
        "locality_report.csv",
        "macro_averages.json",
        "certificates.json",
        "cascade.svg",
        "corrections.svg",
        "summary.txt",
    ] {
        let a = fs::read(r1.join(name)).unwrap();
        assert_eq!(a, fs::read(r2.join(name)).unwrap(), "{name} differs between runs");
    }
    let csv = fs::read_to_string(r1.join("cascade_report.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "R,n,F_R,D_R,A1,A2,lower,upper,pass");
    assert_eq!(csv.lines().count(), 3);
    let macro_json = fs::read_to_string(r1.join("macro_averages.json")).unwrap();
    for key in ["c0_eff", "k1_eff", "k2_eff", "d_alpha"] {
        assert!(macro_json.contains(key), "{key} missing");
    }
    assert!(fs::read_to_string(r1.join("cascade_report.json")).unwrap().contains("\"slack\""));

    let svg = fs::read(r1.join("cascade.svg")).unwrap();
    fs::remove_file(r1.join("cascade.svg")).unwrap();
    let out = sqglab(&["report", s(&r1)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read(r1.join("cascade.svg")).unwrap(), svg);
    assert!(String::from_utf8_lossy(&out.stdout).contains("beta_eff"));

    let tight = write_config(
        tmp.path(),
        "tight.toml",
        &format!("{TINY}\n[diagnostics]\nk2 = 1.0\n"),
    );
    let out = sqglab(&["diagnose", s(&traj), "--config", s(&tight), "--out", s(&tmp.path().join("r3"))]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));

    fs::remove_file(traj.join("snap_00003.sqgf")).unwrap();
    let out = sqglab(&["diagnose", s(&traj), "--config", s(&cfg), "--out", s(&tmp.path().join("r4"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("snap_00003.sqgf"), "{}", stderr(&out));
}

#[test]
fn zero_field_has_undefined_sigma0() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "zero.toml",
        &TINY.replace("seed = 11", "seed = 11\namplitude = 0.0").replace("depth = 2", "depth = 1"),
    );
    let traj = tmp.path().join("traj");
    assert!(simulate(&cfg, &traj).status.success());
    let rep = tmp.path().join("rep");
    let out = sqglab(&["diagnose", s(&traj), "--config", s(&cfg), "--out", s(&rep)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let m = fs::read_to_string(rep.join("macro_averages.json")).unwrap();
    assert!(m.contains("\"sigma0\": null"), "{m}");
    assert!(m.contains("\"eps0_star\": 0.0"), "{m}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("sigma0 undefined"));
}

#[test]
fn sweep_rows_are_deterministic_across_job_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sweep.toml",
        &format!(
            "{}\n[sweep]\nalphas = [0.8, 1.2, 2.0]\n",
            TINY.replace("depth = 2", "depth = 1")
        ),
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = sqglab(&["sweep", "--config", s(&cfg), "--out", s(&a), "--jobs", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = sqglab(&["sweep", "--config", s(&cfg), "--out", s(&b), "--jobs", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(a.join("sweep_summary.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(b.join("sweep_summary.csv")).unwrap());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0.8,") && lines[2].starts_with("1.2,"));
    assert!(lines[3].ends_with("local-Laplacian path, extension diagnostics skipped"));
    assert!(a.join("alpha_2").join("cascade_report.json").exists());
}
