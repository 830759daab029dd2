//! End-to-end runs of the `pdx` binary.

use std::path::Path;
use std::process::{Command, Output};

use pdx::minimax::{schedule_mm, MinimaxConfig};

/// One-dimensional instance with saddle point (0.4, 0.2).
const TINY: &str = "qmm 1 1 1\n1\n-1\n1\n0\n1\n1 1\n";

fn pdx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdx")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Value of `key=` in a summary line.
fn field(line: &str, key: &str) -> String {
    line.split_whitespace()
        .find_map(|t| t.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from {line}"))
        .to_string()
}

fn tiny(dir: &Path) -> String {
    let p = dir.join("tiny.qmm");
    std::fs::write(&p, TINY).unwrap();
    p.display().to_string()
}

#[test]
fn solve_mm_reaches_the_target_on_a_file_instance() {
    let dir = tempfile::tempdir().unwrap();
    let o = pdx(&["solve-mm", "--problem", &tiny(dir.path()), "--eps", "1e-8"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    let gap: f64 = field(&line, "gap").parse().unwrap();
    assert!(gap <= 1e-8, "{line}");
}

#[test]
fn reported_schedule_matches_the_schedule_function() {
    let dir = tempfile::tempdir().unwrap();
    let path = tiny(dir.path());
    let inst = pdx::qmm::read_qmm_file(Path::new(&path)).unwrap();
    let p = inst.minimax_problem().unwrap();
    let gap0 = inst.saddle().gap(&[0.0], &[0.0]).unwrap();
    let cfg = MinimaxConfig {
        eps0: gap0,
        eps: 1e-6,
        ..MinimaxConfig::default()
    };
    let s = schedule_mm(&p, &cfg).unwrap();
    let line = stdout(&pdx(&["solve-mm", "--problem", &path, "--eps", "1e-6"]));
    assert_eq!(field(&line, "lambda"), s.lambda.to_string());
    assert_eq!(field(&line, "T"), s.t.to_string());
}

#[test]
fn missing_problem_file_exits_with_2() {
    let o = pdx(&["solve-mm", "--problem", "/nonexistent/instance.qmm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn unknown_names_exit_with_2() {
    assert_eq!(pdx(&["verify", "--suite", "no-such-suite"]).status.code(), Some(2));
    assert_eq!(pdx(&["bench", "--family", "no-such-family"]).status.code(), Some(2));
    assert_eq!(pdx(&["gen", "--gen", "nope:n=2"]).status.code(), Some(2));
    assert_eq!(pdx(&["solve-fs", "--gen", "fs:n=2,bogus=1"]).status.code(), Some(2));
}

#[test]
fn verify_passes_at_few_seeds() {
    let o = pdx(&["verify", "--seeds", "5"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("suites passed"));
}

#[test]
fn bench_with_an_empty_grid_axis_writes_only_the_header() {
    let o = pdx(&["bench", "--family", "fs-nonuniform", "--grid", "n=[]"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1, "{text}");
    assert!(text.starts_with("n,seeds,"));
}

#[test]
fn bench_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.csv");
    let o = pdx(&[
        "bench",
        "--family",
        "fs-nonuniform",
        "--grid",
        "n=[4,8]",
        "--seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(&out).unwrap();
    let rows: Vec<_> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[1][0], "8");
}

#[test]
fn generated_instances_round_trip_through_solvers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.qmm");
    let path = path.to_str().unwrap();
    let o = pdx(&["gen", "--gen", "mmfs:n=3,dx=3,dy=2,lx=4,ly=4", "--seed", "7", "--out", path]);
    assert!(o.status.success());
    let from_file = stdout(&pdx(&["solve-mmfs", "--problem", path, "--seed", "1", "--eps", "1e-6"]));
    let from_gen = stdout(&pdx(&[
        "solve-mmfs",
        "--gen",
        "mmfs:n=3,dx=3,dy=2,lx=4,ly=4",
        "--seed",
        "7",
        "--eps",
        "1e-6",
    ]));
    assert_eq!(field(&from_file, "gamma"), field(&from_gen, "gamma"));
    assert!(field(&from_file, "gap").parse::<f64>().unwrap() <= 1e-6, "{from_file}");
}

#[test]
fn traces_are_reproducible_under_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let read = |name: &str| {
        let p = dir.path().join(name);
        let o = pdx(&[
            "solve-fs",
            "--gen",
            "fs:n=6,d=3,lbar=1,beta=1,mu=0.5",
            "--seed",
            "11",
            "--eps",
            "1e-6",
            "--trace",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut r = csv::Reader::from_path(&p).unwrap();
        let headers = r.headers().unwrap().clone();
        let wall = headers.iter().position(|h| h == "wall_ns").unwrap();
        r.records()
            .map(|rec| {
                let rec = rec.unwrap();
                rec.iter()
                    .enumerate()
                    .filter(|(i, _)| *i != wall)
                    .map(|(_, v)| v.to_string())
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };
    let (a, b) = (read("a.csv"), read("b.csv"));
    assert!(a.len() > 1);
    assert_eq!(a, b);
}

#[test]
fn overrides_and_config_files_are_applied() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("# tiny run\nproblem = {}\nT = 3\n", tiny(dir.path()))).unwrap();
    let line = stdout(&pdx(&["solve-mm", "--config", cfg.to_str().unwrap()]));
    assert_eq!(field(&line, "T"), "3");
    assert_eq!(field(&line, "steps"), "3");
    let line = stdout(&pdx(&["solve-mm", "--config", cfg.to_str().unwrap(), "--override", "T=5"]));
    assert_eq!(field(&line, "T"), "5");
}

#[test]
fn reductions_run_from_the_command_line() {
    let o = pdx(&["reduce-fs", "--gen", "agg-fs:n=4,d=3,l=2,mu=0.5", "--eps", "1e-6", "--seed", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    assert!(field(&line, "gap").parse::<f64>().unwrap() <= 1e-6, "{line}");
    let o = pdx(&[
        "reduce-mmfs",
        "--gen",
        "agg-mmfs:n=3,dx=2,dy=2,l=2,mu=0.5",
        "--eps",
        "1e-6",
        "--override",
        "sub=1",
        "--override",
        "N=1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(field(&stdout(&o), "gap").parse::<f64>().unwrap() <= 1e-6);
}
