use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn semgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semgen"))
        .args(args)
        .env("SEMGEN_THREADS", "1")
        .output()
        .expect("spawn semgen")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn compile_reports_stats() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "xor.sl", "x ^ y\n");
    let o = semgen(&["compile", &f]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("nodes 3"), "{out}");
    assert!(out.contains("models 2"), "{out}");
}

#[test]
fn compile_dump_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "c.sl", "(a | b) & (b -> c)\n");
    let dump = dir.path().join("c.circuit");
    let o = semgen(&["compile", &f, "--out", dump.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let again = semgen(&["compile", dump.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(stdout(&o), stdout(&again));
}

#[test]
fn wmc_and_semantic_loss() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "xor.sl", "x ^ y\n");
    let o = semgen(&["wmc", &f, "--theta", "0.3,0.8"]);
    assert_eq!(o.status.code(), Some(0));
    // 0.3·0.2 + 0.7·0.8
    let wmc: f64 = stdout(&o).trim().strip_prefix("wmc ").unwrap().parse().unwrap();
    assert!((wmc - 0.62).abs() < 1e-12);

    let o = semgen(&["sl", &f, "--theta", "0.3,0.8"]);
    let line = stdout(&o).lines().next().unwrap().to_owned();
    let sl: f64 = line.strip_prefix("sl ").unwrap().parse().unwrap();
    assert!((sl + 0.62f64.ln()).abs() < 1e-12);
}

#[test]
fn fuzzy_cnf_and_dnf_disagree() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "xor.sl", "x ^ y\n");
    let cnf = stdout(&semgen(&["sl", &f, "--theta", "0.5,0.5", "--fuzzy", "cnf"]));
    let dnf = stdout(&semgen(&["sl", &f, "--theta", "0.5,0.5", "--fuzzy", "dnf"]));
    assert!(cnf.contains("truth 1"), "{cnf}");
    assert!(dnf.contains("truth 0"), "{dnf}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(semgen(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(semgen(&["compile", "/nonexistent/file.sl"]).status.code(), Some(1));
    let bad = write(dir.path(), "bad.sl", "x & & y\n");
    assert_eq!(semgen(&["compile", &bad]).status.code(), Some(1));
    let f = write(dir.path(), "xor.sl", "x ^ y\n");
    assert_eq!(semgen(&["wmc", &f, "--theta", "0.5"]).status.code(), Some(1));
    let wide = write(
        dir.path(),
        "wide.sl",
        "(a ^ b ^ c ^ d ^ e ^ f ^ g ^ h) & (a | h)\n",
    );
    assert_eq!(semgen(&["--budget", "4", "compile", &wide]).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_semgen"))
        .args(["compile", &f])
        .env("SEMGEN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn xor_experiment_is_deterministic_and_reportable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = semgen(&["--seed", "3", "experiment", "xor-toy", "--out", d.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["comparison.csv", "gan/report.csv", "can/report.csv", "can/samples.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed=3\n"), "{manifest}");

    let rep = semgen(&["report", "--run", a.to_str().unwrap()]);
    assert_eq!(rep.status.code(), Some(0));
    assert!(stdout(&rep).contains("can"));

    let weights = a.join("can/weights.bin");
    let s = semgen(&["sample", "--weights", weights.to_str().unwrap(), "-n", "5", "--reject"]);
    assert_eq!(s.status.code(), Some(0), "{}", String::from_utf8_lossy(&s.stderr));
    let lines: Vec<_> = stdout(&s).lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 5);
    for l in lines {
        assert!(l == "x=1 y=0" || l == "x=0 y=1", "invalid accepted sample {l}");
    }
}

#[test]
fn render_annotates_reachability() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "l.txt", "3 4\n....\n....\n####\n");
    let o = semgen(&["render", &f, "--annotate-reach"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("3 4\n"));
    assert!(out.contains('@'), "{out}");
    assert!(out.contains('*'), "{out}");
    let plain = stdout(&semgen(&["render", &f]));
    assert_eq!(plain, "3 4\n....\n....\n####\n");
}
