use std::path::Path;
use std::process::{Command, Output};

use phasewave::experiment::preset_source;

fn phasewave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasewave"))
        .args(args)
        .output()
        .unwrap()
}

fn result_json(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("result.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn metric(v: &serde_json::Value, name: &str) -> f64 {
    v["metrics"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["name"] == name)
        .and_then(|m| m["value"].as_f64())
        .unwrap()
}

#[test]
fn list_presets_is_stable() {
    let a = phasewave(&["list-presets"]);
    let b = phasewave(&["list-presets"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    for name in [
        "target1-coupled",
        "helmholtz-int-100",
        "exterior-ie-300ep",
        "appendix-eta-sweep",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing from\n{text}");
    }
}

#[test]
fn zero_epochs_gives_untrained_error_and_failed_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasewave(&[
        "run",
        "--preset",
        "target1-coupled",
        "--epochs",
        "0",
        "-q",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let v = result_json(dir.path());
    assert_eq!(v["status"], "check-failed");
    let rel = metric(&v, "rel_l2");
    assert!(rel > 0.5 && rel < 2.0, "rel_l2 {rel}");
    for f in ["solution.csv", "history.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn same_seed_same_result() {
    let run = |dir: &Path| {
        let out = phasewave(&[
            "run",
            "--preset",
            "target1-coupled",
            "--epochs",
            "2",
            "--seed",
            "7",
            "-q",
            "--out-dir",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(4));
        let mut v = result_json(dir);
        v.as_object_mut().unwrap().remove("wall_time");
        (v, std::fs::read(dir.join("solution.csv")).unwrap())
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, sa) = run(a.path());
    let (rb, sb) = run(b.path());
    assert_eq!(ra["config"]["seed"], 7);
    assert_eq!(ra, rb);
    assert_eq!(sa, sb);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nkind = \"fit-coupled\"\nbogus = 1\n").unwrap();
    assert_eq!(
        phasewave(&["run", "--config", bad.to_str().unwrap()]).status.code(),
        Some(2)
    );
    assert_eq!(phasewave(&["run", "--preset", "no-such-preset"]).status.code(), Some(2));

    let src = preset_source("exterior-ie-300ep")
        .unwrap()
        .replace("a = 2.0", "a = 0.5");
    std::fs::write(&bad, src).unwrap();
    let out = phasewave(&["run", "--config", bad.to_str().unwrap(), "-q"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn divergence_exits_3_with_partial_history() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("hot.toml");
    let src = preset_source("target1-coupled")
        .unwrap()
        .replace("lr = 0.002", "lr = 1e200");
    std::fs::write(&cfg, src).unwrap();
    let out = phasewave(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--epochs",
        "3",
        "-q",
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
    let v = result_json(&dir.path().join("out"));
    assert_eq!(v["status"], "diverged");
    assert!(dir.path().join("out/history.csv").exists());
    assert!(v["notes"].to_string().contains("diverged"));
}
