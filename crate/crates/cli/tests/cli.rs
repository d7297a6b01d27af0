use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn pbfree(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pbfree"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("run.cfg");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn report(dir: &Path) -> String {
    fs::read_to_string(dir.join("out/report.txt")).unwrap()
}

fn value<'a>(report: &'a str, key: &str) -> Option<&'a str> {
    report.lines().find_map(|l| l.strip_prefix(key)?.strip_prefix(" = "))
}

const SLAB: &str = "grid.nx = 33\ngrid.ny = 9\ngrid.ly = 0.25\ngrid.boundary = periodic_y\nparams.lambda = 60\n";

#[test]
fn unloaded_solve_returns_zero() {
    let tmp = TempDir::new().unwrap();
    let out = pbfree(&["solve"], Some("grid.nx = 17\ngrid.ny = 17\nparams.lambda = 0\n"), tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(tmp.path());
    assert_eq!(value(&r, "status"), Some("converged"));
    assert!(value(&r, "energy_smooth").unwrap().parse::<f64>().unwrap().abs() < 1e-12);
    assert_eq!(value(&r, "morse_index"), Some("0"));
    assert!(tmp.path().join("out/metadata.txt").exists());
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = TempDir::new().unwrap();
    let bad = [
        "grid.nx = 17\ngrid.nx = 33\n",
        "grid.colour = blue\n",
        "params.p = 3\nparams.q = 3\n",
        "grid.nx = many\n",
        "no equals sign\n",
    ];
    for text in bad {
        let out = pbfree(&["solve"], Some(text), tmp.path());
        assert_eq!(out.status.code(), Some(2), "{text:?}");
        assert!(!out.stderr.is_empty());
    }
    let out = Command::new(env!("CARGO_BIN_EXE_pbfree"))
        .args(["solve", "--config"])
        .arg(tmp.path().join("missing.cfg"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn duplicate_key_names_both_lines() {
    let tmp = TempDir::new().unwrap();
    let out = pbfree(&["solve"], Some("# grid\ngrid.nx = 17\nparams.q = 3\ngrid.nx = 33\n"), tmp.path());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains('2') && msg.contains('4') && msg.contains("grid.nx"), "{msg}");
}

#[test]
fn missing_subcommand_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(pbfree(&[], Some("grid.nx = 17\n"), tmp.path()).status.code(), Some(2));
    let out = pbfree(&[], Some("run.subcommand = eig\ngrid.nx = 17\ngrid.ny = 17\n"), tmp.path());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn solver_failure_exits_with_code_three() {
    let tmp = TempDir::new().unwrap();
    let cfg = format!("{SLAB}solver.max_iter = 1\n");
    let out = pbfree(&["continue"], Some(&cfg), tmp.path());
    assert_eq!(out.status.code(), Some(3));
    // the report is still written and carries the error
    assert!(value(&report(tmp.path()), "error").is_some());
}

#[test]
fn unwritable_output_exits_with_code_four() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pbfree"))
        .arg("eig")
        .arg("--out")
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn check_reports_every_pass() {
    let tmp = TempDir::new().unwrap();
    let out = pbfree(&["check"], None, tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let r = report(tmp.path());
    assert_eq!(value(&r, "passed"), Some("9"));
    assert_eq!(value(&r, "failed"), Some("0"));
}

#[test]
fn continuation_tracks_the_oracle() {
    let tmp = TempDir::new().unwrap();
    let cfg = format!("{SLAB}schedule.steps = 3\n");
    let out = pbfree(&["continue"], Some(&cfg), tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(tmp.path());
    assert_eq!(value(&r, "jump_median_nonincreasing"), Some("true"));
    let csv = fs::read_to_string(tmp.path().join("out/continuation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let out = pbfree(&["oracle"], Some(SLAB), tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let umax: f64 = value(&report(tmp.path()), "umax").unwrap().parse().unwrap();
    assert!((umax - 1.7709055).abs() < 1e-6, "{umax}");
}

#[test]
fn same_seed_gives_identical_reports() {
    let cfg = format!("{SLAB}solver.perturb = 0.05\nschedule.steps = 2\n");
    let run = |seed: &str| {
        let tmp = TempDir::new().unwrap();
        let out = pbfree(&["continue", "--seed", seed], Some(&cfg), tmp.path());
        assert_eq!(out.status.code(), Some(0));
        (report(tmp.path()), fs::read(tmp.path().join("out/u.csv")).unwrap())
    };
    let a = run("7");
    assert_eq!(a, run("7"));
    assert_ne!(a.1, run("8").1);
}

#[test]
fn sweep_output_does_not_depend_on_jobs() {
    let cfg = format!("{SLAB}schedule.steps = 2\nsweep.lambdas = 30, 60, 90\n");
    let run = |jobs: &str| {
        let tmp = TempDir::new().unwrap();
        let out = pbfree(&["sweep", "--jobs", jobs], Some(&cfg), tmp.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        (report(tmp.path()), fs::read_to_string(tmp.path().join("out/sweep.csv")).unwrap())
    };
    let (r1, c1) = run("1");
    let (r4, c4) = run("4");
    assert_eq!(r1, r4);
    assert_eq!(c1, c4);
    assert_eq!(c1.lines().count(), 4);
    assert!(c1.lines().skip(1).all(|l| l.contains(",converged,")));
}
