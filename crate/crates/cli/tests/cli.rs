use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn eigshape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eigshape"))
        .args(args)
        .env("EIGSHAPE_WORKERS", "2")
        .output()
        .unwrap()
}

fn small_config(dir: &Path, extra: &str) -> String {
    format!(
        "mesh.resolution = 48\noptimizer.max_inner = 400\ndiagnostics.enabled = false\noutput.dir = {}\noutput.run_id = cli\n{extra}",
        dir.display()
    )
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_then_eigen_reproduces_lambda() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.txt");
    fs::write(&cfg, small_config(tmp.path(), "")).unwrap();
    let o = eigshape(&["run", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let run = tmp.path().join("cli");
    let on_disk: serde_json::Value =
        serde_json::from_slice(&fs::read(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report, on_disk);

    let o = eigshape(&[
        "eigen",
        run.join("mask.csv").to_str().unwrap(),
        run.join("coeff.csv").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let eig: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let a = eig["lambda1"].as_f64().unwrap();
    let b = report["lambda1"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-8 * b, "{a} vs {b}");
}

#[test]
fn bad_config_fails_with_stage_and_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.txt");
    fs::write(&cfg, "coeff.generator = nosuch\nmesh.bogus = 1\n").unwrap();
    let o = eigshape(&["run", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("config"), "{err}");
    assert!(err.contains("line 1") && err.contains("line 2"), "{err}");
    assert!(err.contains("checkerboard"), "{err}");
}

#[test]
fn diagnose_failure_is_stage_labelled() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.txt");
    fs::write(&cfg, small_config(tmp.path(), "")).unwrap();
    assert!(eigshape(&["run", cfg.to_str().unwrap()]).status.success());
    let run = tmp.path().join("cli");
    let o = eigshape(&[
        "diagnose",
        run.join("u_star.csv").to_str().unwrap(),
        run.join("coeff.csv").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("diagnostics"), "{}", stderr(&o));
}

#[test]
fn missing_file_fails() {
    let o = eigshape(&["eigen", "/nonexistent/mask.csv", "/nonexistent/coeff.csv"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("read"), "{}", stderr(&o));
}

#[test]
fn sweep_runs_every_combination() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("t.txt");
    fs::write(&cfg, small_config(tmp.path(), "coeff.generator = random\n")).unwrap();
    let o = eigshape(&["sweep", cfg.to_str().unwrap(), "--vary", "coeff.seed=1,2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<serde_json::Value> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    for (l, id) in lines.iter().zip(["cli_seed-1", "cli_seed-2"]) {
        assert_eq!(l["run_id"], id);
        assert_eq!(l["ok"], true);
        assert!(tmp.path().join(id).join("report.json").is_file());
    }
}
