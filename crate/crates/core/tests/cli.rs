use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use orthant::experiment::ExperimentReport;
use orthant::skorohod::ReflectionSolution;
use tempfile::TempDir;

fn orthant(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orthant")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

struct Files(TempDir);

impl Files {
    fn new() -> Files {
        Files(tempfile::tempdir().unwrap())
    }

    fn write(&self, name: &str, contents: &str) -> String {
        let p = self.path(name);
        fs::write(&p, contents).unwrap();
        p
    }

    fn path(&self, name: &str) -> String {
        self.0.path().join(name).to_str().unwrap().to_string()
    }

    fn dir(&self) -> &Path {
        self.0.path()
    }
}

const ZERO_1: &str = r#"{"n":1,"entries":[0]}"#;
const RAMP: &str = "t,x1\n0,0\n0.5,-0.5\n1,-1\n1.5,-1\n2,-1\n";

#[test]
fn solve_reproduces_the_ramp() {
    let f = Files::new();
    let out = orthant(&["solve", &f.write("x.csv", RAMP), &f.write("p.json", ZERO_1)]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "t,w1,l1\n0,0,0\n0.5,0,0.5\n1,0,1\n1.5,0,1\n2,0,1\n");
    let shifted = "t,x1\n0,2\n0.5,1.5\n1,1\n1.5,1\n2,1\n";
    let out = orthant(&[
        "solve",
        &f.write("y.csv", shifted),
        &f.path("p.json"),
        "--algorithm",
        "fixedpoint",
    ]);
    assert_eq!(stdout(&out), "t,w1,l1\n0,2,0\n0.5,1.5,0\n1,1,0\n1.5,1,0\n2,1,0\n");
}

#[test]
fn solve_zero_path() {
    let f = Files::new();
    let x = f.write("x.csv", "t,x1,x2\n0,0,0\n1,0,0\n2,0,0\n");
    let p = f.write("p.csv", "0,0.5\n0.5,0\n");
    let out = orthant(&["solve", &x, &p, "--quiet"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "t,w1,w2,l1,l2\n0,0,0,0,0\n1,0,0,0,0\n2,0,0,0,0\n");
}

#[test]
fn validation_and_convergence_exit_codes() {
    let f = Files::new();
    let x = f.write("x.csv", RAMP);
    let p2 = f.write("p2.json", r#"{"n":2,"entries":[0,0,0,0]}"#);
    let out = orthant(&["solve", &x, &p2]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));
    let bad = f.write("bad.json", r#"{"n":2,"entries":[0,1,1,0]}"#);
    assert_eq!(
        code(&orthant(&["solve", &f.write("x2.csv", "t,a,b\n0,0,0\n"), &bad])),
        2
    );
    assert_eq!(code(&orthant(&["solve", &f.path("missing.csv"), &x])), 2);

    let wavy = "t,x1,x2\n0,0,0\n1,-1,-2\n2,-3,-1\n3,-2,-4\n";
    let p = f.write("p.json", r#"{"n":2,"entries":[0,0.9,0.9,0]}"#);
    let out = orthant(&[
        "solve",
        &f.write("w.csv", wavy),
        &p,
        "--algorithm",
        "fixedpoint",
        "--max-iter",
        "1",
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn generate_map_with_single_state() {
    let f = Files::new();
    let spec = f.write(
        "map.json",
        r#"{"kind":"map","generator":{"n":1,"entries":[0]},
            "states":[{"drift":[-2],"jump_rates":[],"jumps":[]}],"transition_jumps":[]}"#,
    );
    let out = orthant(&["generate", &spec, "--horizon", "1", "--step", "0.5"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "t,x1\n0,0\n0.5,-1\n1,-2\n");
    assert!(String::from_utf8_lossy(&out.stderr).contains("mean drift: -2"));
}

#[test]
fn generate_is_deterministic_and_reports_stability() {
    let f = Files::new();
    let spec = f.write(
        "bm.json",
        r#"{"kind":"brownian","mu":[-1,0.5],"covariance":{"n":2,"entries":[1,0,0,1]}}"#,
    );
    let p = f.write("p.json", r#"{"n":2,"entries":[0,0.9,0,0]}"#);
    let args = |out: &str| {
        vec![
            "generate".to_string(),
            spec.clone(),
            "--horizon".into(),
            "50".into(),
            "--step".into(),
            "0.1".into(),
            "--seed".into(),
            "9".into(),
            "--routing".into(),
            p.clone(),
            "--out".into(),
            out.to_string(),
        ]
    };
    let (a, b) = (f.path("a.csv"), f.path("b.csv"));
    let out = Command::new(env!("CARGO_BIN_EXE_orthant"))
        .args(args(&a))
        .output()
        .unwrap();
    Command::new(env!("CARGO_BIN_EXE_orthant"))
        .args(args(&b))
        .output()
        .unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let text = stdout(&out);
    assert!(text.contains("mean drift: -1, 0.5"), "{text}");
    // R⁻¹·rho = (-1, 0.5 - 0.9) is negative.
    assert!(text.contains("stability: stable"), "{text}");
}

#[test]
fn generate_renewal_at_critical_premium_prints_zero_drift() {
    let f = Files::new();
    let spec = f.write(
        "risk.json",
        r#"{"kind":"renewal_risk","premiums":[0.5],"interarrivals":[{"law":"exponential","rate":1}],
            "claims":[{"law":"exponential","rate":2}]}"#,
    );
    let out = orthant(&[
        "generate",
        &spec,
        "--horizon",
        "10",
        "--step",
        "1",
        "--out",
        &f.path("x.csv"),
    ]);
    let line = stdout(&out)
        .lines()
        .find(|l| l.starts_with("mean drift:"))
        .unwrap()
        .to_string();
    let drift: f64 = line.trim_start_matches("mean drift:").trim().parse().unwrap();
    assert!(drift.abs() < 1e-12);
    let bad = f.write(
        "bad.json",
        r#"{"kind":"brownian","mu":[0],"covariance":{"n":1,"entries":[-1]}}"#,
    );
    assert_eq!(
        code(&orthant(&["generate", &bad, "--horizon", "1", "--step", "0.5"])),
        2
    );
}

const CONFIG: &str = r#"{"kind":"irrelevance",
    "process":{"kind":"brownian","mu":[-0.2,-0.2,-0.2],"covariance":{"n":3,"entries":[1,0,0,0,1,0,0,0,1]}},
    "routing":{"matrix":{"n":3,"entries":[0,0,0,0,0,0,0,0,0]}},
    "initials":[[1,1,1]],
    "grid":{"horizon":50,"step":0.01},
    "seeds":{"base":0,"count":8},
    "series_points":20}"#;

#[test]
fn experiment_reports_are_byte_identical() {
    let f = Files::new();
    let config = f.write("c.json", CONFIG);
    let (a, b) = (f.path("a.json"), f.path("b.json"));
    assert_eq!(code(&orthant(&["experiment", &config, "--out", &a])), 0);
    let threaded = Command::new(env!("CARGO_BIN_EXE_orthant"))
        .args(["experiment", &config, "--out", &b])
        .env("REFLECT_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&threaded), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let report: ExperimentReport = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert_eq!(report.schema, "orthant-experiment/v1");

    let c = f.path("c_seed.json");
    orthant(&["experiment", &config, "--seed", "100", "--out", &c]);
    let moved: ExperimentReport = serde_json::from_slice(&fs::read(&c).unwrap()).unwrap();
    assert_eq!(moved.config.seeds.base, 100);
    assert_ne!(moved.results, report.results);
}

#[test]
fn invalid_experiment_configs_exit_with_two() {
    let f = Files::new();
    let zero_count = CONFIG.replace(r#""count":8"#, r#""count":0"#);
    assert_eq!(code(&orthant(&["experiment", &f.write("a.json", &zero_count)])), 2);
    let negative = CONFIG.replace("[[1,1,1]]", "[[1,-1,1]]");
    assert_eq!(code(&orthant(&["experiment", &f.write("b.json", &negative)])), 2);
    assert_eq!(code(&orthant(&["experiment", &f.write("c.json", "{not json")])), 2);
}

#[test]
fn export_series() {
    let f = Files::new();
    let report = f.path("r.json");
    orthant(&["experiment", &f.write("c.json", CONFIG), "--out", &report]);
    let names = stdout(&orthant(&["export-series", &report]));
    assert_eq!(names, "median_sup_difference_0\nmean_sup_difference_0\n");
    let csv = stdout(&orthant(&[
        "export-series",
        &report,
        "--series",
        "median_sup_difference_0",
    ]));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,median_sup_difference_0"));
    assert_eq!(lines.next(), Some("0,1"));
    assert_eq!(lines.count(), 20);
    let dir: PathBuf = f.dir().join("series");
    let out = orthant(&["export-series", &report, "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(dir.join("mean_sup_difference_0.csv").exists());
    assert_eq!(code(&orthant(&["export-series", &report, "--series", "nope"])), 2);
}

#[test]
fn check_accepts_solver_output_and_flags_corruption() {
    let f = Files::new();
    let x = f.write("x.csv", "t,x1,x2\n0,-1,0.5\n1,-2,-1\n2,-1.5,-2\n3,-3,-2.5\n4,-2,-2\n");
    let p = f.write("p.json", r#"{"n":2,"entries":[0,0.5,0.25,0]}"#);
    let s = f.path("s.csv");
    for algorithm in ["step", "fixedpoint"] {
        assert_eq!(
            code(&orthant(&[
                "solve",
                &x,
                &p,
                "--algorithm",
                algorithm,
                "--out",
                &s,
                "-q"
            ])),
            0
        );
        let out = orthant(&["check", &s, &x, &p]);
        assert_eq!(code(&out), 0, "{}", stdout(&out));
    }

    let sol = ReflectionSolution::read_csv(fs::read(&s).unwrap().as_slice()).unwrap();
    assert!(sol.l.point(3)[0] > sol.l.point(2)[0]);
    let mut bad = sol.clone();
    bad.l.point_mut(3)[0] = sol.l.point(2)[0] - 0.25;
    bad.write_csv(fs::File::create(f.path("bad.csv")).unwrap()).unwrap();
    let out = orthant(&["check", &f.path("bad.csv"), &x, &p]);
    assert_eq!(code(&out), 1);
    assert!(
        stdout(&out).contains("violation: monotonicity at index 3 "),
        "{}",
        stdout(&out)
    );

    let mut bad = sol.clone();
    bad.w.point_mut(3)[0] = 0.5;
    bad.write_csv(fs::File::create(f.path("bad2.csv")).unwrap()).unwrap();
    let out = orthant(&["check", &f.path("bad2.csv"), &x, &p]);
    assert_eq!(code(&out), 1);
    assert!(
        stdout(&out).contains("violation: complementarity at index 3 (t = 3), coordinate 1"),
        "{}",
        stdout(&out)
    );

    let report = f.path("audit.json");
    orthant(&["check", &f.path("bad2.csv"), &x, &p, "--out", &report]);
    let audit: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(audit["passed"], false);
}
