use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const HALF: &str = "
var s : [0..2] init 0;
label goal = s = 1;
[Go] s = 0 -> 0.5:(s:=1) + 0.5:(s:=2);
";

struct Dir(PathBuf);

impl Dir {
    fn new(tag: &str) -> Self {
        let d = std::env::temp_dir().join(format!("apfsm-cli-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        Dir(d)
    }

    fn file(&self, name: &str, contents: &str) -> String {
        let p = self.0.join(name);
        std::fs::write(&p, contents).unwrap();
        p.to_str().unwrap().to_string()
    }

    fn path(&self, name: &str) -> String {
        self.0.join(name).to_str().unwrap().to_string()
    }
}

impl Drop for Dir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn apfsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apfsm"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = apfsm(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(p: &str) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn validate_is_silent_on_success() {
    let d = Dir::new("validate");
    let out = apfsm(&["validate", &d.file("half.apfsm", HALF)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty() && out.stderr.is_empty());
}

#[test]
fn validate_reports_located_errors() {
    let d = Dir::new("errors");
    let bad = d.file(
        "bad.apfsm",
        "var s : [0..2] init 0;\n[Go] s = 0 -> 0.5:(s:=q);\n",
    );
    let out = apfsm(&["validate", &bad]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bad.apfsm:2:"), "{err}");
}

#[test]
fn half_half_check() {
    let d = Dir::new("check");
    assert_eq!(
        ok(&["check", &d.file("half.apfsm", HALF), "--target", "goal"]),
        "0.5000000000\n"
    );
}

#[test]
fn exit_codes() {
    let d = Dir::new("codes");
    let m = d.file("half.apfsm", HALF);
    assert_eq!(
        apfsm(&["check", &m, "--target", "nope"]).status.code(),
        Some(1)
    );
    assert_eq!(apfsm(&["check", &m]).status.code(), Some(2));
    assert_eq!(apfsm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        apfsm(&["curve", &m, "--target", "goal", "--from", "5", "--to", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        apfsm(&["check", &d.path("missing.apfsm"), "--target", "goal"])
            .status
            .code(),
        Some(2)
    );
    let out = d.path("m.apfsm");
    assert_eq!(
        apfsm(&["gen-scenario", "--set", "colour=red", "--out", &out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        apfsm(&["gen-scenario", "--set", "width=0", "--out", &out])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn failures_leave_no_output() {
    let d = Dir::new("partial");
    let m = d.file("half.apfsm", HALF);
    let out = d.path("curve.csv");
    assert_eq!(
        apfsm(&["curve", &m, "--target", "nope", "--time", "s", "--to", "3", "--out", &out])
            .status
            .code(),
        Some(1)
    );
    assert!(!Path::new(&out).exists());
    std::fs::write(&out, "keep").unwrap();
    assert_eq!(
        apfsm(&["curve", &m, "--target", "nope", "--time", "s", "--to", "3", "--out", &out])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(read(&out), b"keep");
    assert_eq!(std::fs::read_dir(&d.0).unwrap().count(), 2);
}

#[test]
fn outputs_are_idempotent_and_independent_of_workers() {
    let d = Dir::new("idem");
    let (s1, s2) = (d.path("s1.json"), d.path("s2.json"));
    ok(&["calibrate", "--trials", "200", "--seed", "4", "--out", &s1]);
    ok(&[
        "--workers",
        "1",
        "calibrate",
        "--trials",
        "200",
        "--seed",
        "4",
        "--out",
        &s2,
    ]);
    assert_eq!(read(&s1), read(&s2));

    let (m1, m2) = (d.path("m1.apfsm"), d.path("m2.apfsm"));
    ok(&[
        "gen-scenario",
        "--stats",
        &s1,
        "--set",
        "width=3",
        "--out",
        &m1,
    ]);
    ok(&[
        "gen-scenario",
        "--stats",
        &s2,
        "--set",
        "width=3",
        "--out",
        &m2,
    ]);
    assert_eq!(read(&m1), read(&m2));

    for (name, args) in [
        (
            "curve",
            vec![
                "curve", &m1, "--target", "success", "--to", "60", "--step", "7",
            ],
        ),
        (
            "simulate",
            vec![
                "simulate", &m1, "--event", "success", "-n", "3000", "--seed", "9",
            ],
        ),
        ("outcomes", vec!["outcomes", &m1, "--dir", "max"]),
    ] {
        let outs: Vec<Vec<u8>> = ["1", "2", "3"]
            .iter()
            .map(|w| {
                let out = d.path(&format!("{name}-{w}"));
                let mut a = vec!["--workers", w];
                a.extend(&args);
                a.extend(["--out", &out]);
                ok(&a);
                read(&out)
            })
            .collect();
        assert!(
            outs.windows(2).all(|w| w[0] == w[1]),
            "{name} output differs"
        );
    }
}

#[test]
fn pipeline_curve_ends_at_unbounded_probability() {
    let d = Dir::new("pipeline");
    let (stats, model, csv) = (
        d.path("stats.json"),
        d.path("desk.apfsm"),
        d.path("curve.csv"),
    );
    ok(&[
        "calibrate",
        "--trials",
        "300",
        "--seed",
        "1",
        "--out",
        &stats,
    ]);
    ok(&["gen-scenario", "--stats", &stats, "--out", &model]);
    let build = ok(&["build", &model]);
    assert!(build.contains("states"), "{build}");
    ok(&[
        "curve", &model, "--target", "success", "--from", "0", "--to", "400", "--step", "20",
        "--tol", "1e-12", "--out", &csv,
    ]);
    let text = String::from_utf8(read(&csv)).unwrap();
    assert!(text.starts_with("T,min,max,uniform\n"));
    let last: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|f| f.parse().unwrap())
        .collect();
    let check = |mode: &str, dir: &str| -> f64 {
        ok(&[
            "check", &model, "--target", "success", "--mode", mode, "--dir", dir, "--tol", "1e-12",
        ])
        .trim()
        .parse()
        .unwrap()
    };
    assert!((last[1] - check("interval", "min")).abs() < 1e-9);
    assert!((last[2] - check("interval", "max")).abs() < 1e-9);
    assert!((last[3] - check("uniform", "fixed")).abs() < 1e-9);
}

#[test]
fn simulate_writes_estimate_and_trace() {
    let d = Dir::new("simulate");
    let m = d.file("half.apfsm", HALF);
    let (csv, trace) = (d.path("est.csv"), d.path("trace.txt"));
    ok(&[
        "simulate", &m, "--event", "goal", "-n", "2000", "--seed", "2", "--out", &csv, "--trace",
        &trace,
    ]);
    let text = String::from_utf8(read(&csv)).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(text.lines().next().unwrap(), "event,n,point,lo,hi,seed");
    let v: Vec<f64> = row[2..5].iter().map(|f| f.parse().unwrap()).collect();
    assert!(v[1] <= v[0] && v[0] <= v[2], "{text}");
    // four standard errors at n = 2000
    assert!((v[0] - 0.5).abs() < 0.045, "{text}");
    let dump = String::from_utf8(read(&trace)).unwrap();
    assert!(dump.contains("--Go/"), "{dump}");
}
