use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "lambda = 1.0\n\n[[queues]]\nm = 1\nn = 1\nmu = 1.0\n\n[[queues]]\nm = 1\nn = 1\nmu = 1.0\n";

fn mmroute(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmroute")).args(args).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(&format!("{key}="))).unwrap();
    line[key.len() + 1..].parse().unwrap()
}

#[test]
fn bounds_and_optimal_on_two_unit_queues() {
    let dir = TempDir::new().unwrap();
    let inst = write(&dir, "small.toml", SMALL);
    let o = mmroute(&["bounds", s(&inst)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(value(&text, "lbr"), 0.0);
    assert!((value(&text, "lbp") - 1.0 / 7.0).abs() < 1e-12);

    let policy = dir.path().join("policy.csv");
    let o = mmroute(&["optimal", s(&inst), "--policy-out", s(&policy)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!((value(&stdout(&o), "z_op") - 0.2).abs() < 1e-10);
    let dump = fs::read_to_string(&policy).unwrap();
    let lines: Vec<&str> = dump.lines().collect();
    assert_eq!(lines[0], "state,x1,x2,queue");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].ends_with(",1,1,-1"));
}

#[test]
fn evaluate_writes_steady_state() {
    let dir = TempDir::new().unwrap();
    let inst = write(&dir, "small.toml", SMALL);
    let steady = dir.path().join("pi.csv");
    let o = mmroute(&["evaluate", s(&inst), "--family", "sq", "--steady-out", s(&steady)]);
    assert_eq!(o.status.code(), Some(0));
    assert!((value(&stdout(&o), "loss_probability") - 0.2).abs() < 1e-10);
    let total: f64 = fs::read_to_string(&steady)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn indices_and_obs_print_tables() {
    let dir = TempDir::new().unwrap();
    let inst = write(&dir, "small.toml", SMALL);
    let o = mmroute(&["indices", s(&inst), "--family", "rb"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 3);
    let o = mmroute(&["--rho", "0.5", "obs", s(&inst)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("queue,lambda,probability,loss_rate"));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(mmroute(&["bounds", s(&missing)]).status.code(), Some(2));

    let garbled = write(&dir, "garbled.toml", "lambda = = 1\n");
    let o = mmroute(&["bounds", s(&garbled)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));

    let invalid = write(&dir, "invalid.toml", "lambda = 1.0\n[[queues]]\nm = 3\nn = 2\nmu = 1.0\n");
    assert_eq!(mmroute(&["bounds", s(&invalid)]).status.code(), Some(2));

    let small = write(&dir, "small.toml", SMALL);
    assert_eq!(mmroute(&["evaluate", s(&small), "--family", "nope"]).status.code(), Some(2));
    assert_eq!(mmroute(&["optimal", s(&small), "--tol", "1e-300"]).status.code(), Some(3));

    let huge = "rho = 1.0\n".to_string() + &"[[queues]]\nm = 1\nn = 150\nmu = 1.0\n".repeat(3);
    let huge = write(&dir, "huge.toml", &huge);
    assert_eq!(mmroute(&["optimal", s(&huge)]).status.code(), Some(4));
    assert_eq!(mmroute(&["evaluate", s(&huge), "--family", "sq"]).status.code(), Some(4));
}

#[test]
fn sweep_appends_tagged_rows() {
    let dir = TempDir::new().unwrap();
    let inst = write(&dir, "small.toml", SMALL);
    let csv = dir.path().join("out.csv");
    let grid = ["--rho-from", "0.8", "--rho-to", "1.0", "--rho-step", "0.1"];
    let mut args = vec!["sweep", s(&inst), "--out", s(&csv)];
    args.extend(grid);
    assert_eq!(mmroute(&args).status.code(), Some(0));
    args.extend(["--append", "--tag", "second"]);
    assert_eq!(mmroute(&args).status.code(), Some(0));

    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("tag,rho,lambda,z_op"));
    assert_eq!(lines.iter().filter(|l| l.starts_with("small,")).count(), 3);
    assert_eq!(lines.iter().filter(|l| l.starts_with("second,")).count(), 3);
    assert!(lines[1].starts_with("small,0.8,"));
    let summary = fs::read_to_string(dir.path().join("out.summary.txt")).unwrap();
    assert_eq!(summary.lines().count(), 6);
}

#[test]
fn sweep_without_families_writes_header_only() {
    let dir = TempDir::new().unwrap();
    let inst = write(&dir, "small.toml", SMALL);
    let csv = dir.path().join("empty.csv");
    let o = mmroute(&["sweep", s(&inst), "--families", "", "--out", s(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1);
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let inst = write(
        &dir,
        "mixed.toml",
        "rho = 1.0\n[[queues]]\nm = 1\nn = 4\nmu = 3.0\n[[queues]]\nm = 2\nn = 3\nmu = 1.0\n",
    );
    let strip = |p: &Path| -> Vec<String> {
        let text = fs::read_to_string(p).unwrap();
        let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        let keep = header.iter().position(|c| c.starts_with("wall_")).unwrap();
        text.lines().map(|l| l.split(',').take(keep).collect::<Vec<_>>().join(",")).collect()
    };
    let one = dir.path().join("one.csv");
    let four = dir.path().join("four.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_mmroute"))
        .env("MMROUTE_THREADS", "1")
        .args(["sweep", s(&inst), "--out", s(&one)])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(mmroute(&["--threads", "4", "sweep", s(&inst), "--out", s(&four)]).status.code(), Some(0));
    let (a, b) = (strip(&one), strip(&four));
    assert_eq!(a.len(), 12);
    assert_eq!(a, b);
}
