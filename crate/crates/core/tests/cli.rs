use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_keldysh-lab"))
}

fn config(experiment: &str, grids: &str, dir: &Path, extra: &str) -> String {
    format!(
        "experiment = \"{experiment}\"\ngrids = {grids}\n\n[K]\nkind = \"power\"\nk0 = 1\n\n[domain]\na = 0.0\nb = 2.0\nd = 1.0\n{extra}\n[output]\ndir = {:?}\nformats = [\"csv\", \"json\", \"dat\"]\n",
        dir.display()
    )
}

fn run(text: &str, tmp: &Path, name: &str) -> Output {
    let path = tmp.join(name);
    fs::write(&path, text).unwrap();
    bin().arg("run").arg(&path).output().unwrap()
}

#[test]
fn list_names_every_experiment() {
    let out = bin().arg("list").output().unwrap();
    assert!(out.status.success());
    let s = String::from_utf8(out.stdout).unwrap();
    for name in ["validate", "trace", "ibp", "energy", "poincare", "open", "closed", "mixed_dn", "maxprinciple", "dual"] {
        assert!(s.lines().any(|l| l.starts_with(name)), "{name}");
    }
}

#[test]
fn missing_domain_field_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = config("validate", "[17]", &tmp.path().join("o"), "").replace("b = 2.0\n", "");
    let out = run(&text, tmp.path(), "bad.toml");
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("`b`") && err.contains("line"), "{err}");
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(bin().arg("bogus").output().unwrap().status.code(), Some(1));
}

#[test]
fn validate_writes_csv_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("v");
    let out = run(&config("validate", "[17, 33]", &dir, ""), tmp.path(), "v.toml");
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.join("results.csv")).unwrap();
    assert!(csv.starts_with("n,violations,flags,admissible\n"));
    assert_eq!(csv.lines().count(), 3);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["seed"], 42);
    assert!(dir.join("results.dat").exists());
}

#[test]
fn closed_problem_ladder_passes_with_float_format() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("c");
    let extra = "\n[params]\ng_char = 1.0\n";
    let out = run(&config("closed", "[17, 33, 65]", &dir, extra), tmp.path(), "c.toml");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("results.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "17");
    let re_ok = |s: &str| {
        let (m, e) = s.split_once('e').unwrap();
        m.split_once('.').unwrap().1.len() == 12 && (e.starts_with('+') || e.starts_with('-')) && e.len() == 3
    };
    assert!(row[1..6].iter().all(|c| re_ok(c)), "{row:?}");
}

#[test]
fn coarse_poincare_ladder_reports_a_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("p");
    let extra = "rect = [0.0, 1.0, 0.0, 1.0]\n\n[params]\ntrials = 2\n";
    let out = run(&config("poincare", "[9, 17]", &dir, extra), tmp.path(), "p.toml");
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], false);
}

#[test]
fn output_is_deterministic_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let extra = "rect = [0.0, 1.0, 0.0, 1.0]\n\n[params]\ntrials = 8\n";
    let csv = |threads: &str, name: &str| {
        let dir = tmp.path().join(name);
        let path = tmp.path().join(format!("{name}.toml"));
        fs::write(&path, config("poincare", "[33, 65]", &dir, extra)).unwrap();
        let out = bin().arg("run").arg(&path).env("KELDYSH_LAB_THREADS", threads).output().unwrap();
        assert!(out.status.code().is_some());
        fs::read(dir.join("results.csv")).unwrap()
    };
    assert_eq!(csv("1", "a"), csv("4", "b"));
}

#[test]
fn trace_prints_the_characteristic() {
    let out = bin().args(["trace", "--K", "power:1", "--start=-1,0", "--branch", "plus"]).output().unwrap();
    assert!(out.status.success());
    let s = String::from_utf8(out.stdout).unwrap();
    assert!(s.starts_with("x,y\n"));
    let last: Vec<f64> = s.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!(last[0].abs() < 1e-9 && (last[1] - 2.0).abs() < 1e-6, "{last:?}");
    let bad = bin().args(["trace", "--K", "power:1", "--start=1,0"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
