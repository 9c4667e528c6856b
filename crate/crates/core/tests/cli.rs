use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_groupoid-mech"))
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().arg("--out").arg(out).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn rigid_body_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shipped("rigid-body.json");
    let out = run(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("rigid-body.trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("index,r00,r01,r02,r10,"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    // The last node has no outgoing arrow and the last two no control.
    assert!(rows[9].ends_with(",,,,,,"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rigid-body.report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "ok");
    assert!(report["residual"].as_f64().unwrap() <= 1e-8);
    assert!(report["metrics"]["control_defect_gap"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "a.json", r#"{"name":"a","problem":{"kind":"verify"},"extra":true}"#);
    let negative = write(
        dir.path(),
        "b.json",
        r#"{"name":"b","problem":{"kind":"pair-spline","nodes":-9,"start":[[0],[1]],"end":[[7],[8]]}}"#,
    );
    let malformed = write(dir.path(), "c.json", "{not json");
    for path in [unknown, negative, malformed, dir.path().join("missing.json").to_string_lossy().into_owned()] {
        let out = run(&["run", &path], dir.path());
        assert_eq!(out.status.code(), Some(2), "{path}");
        assert!(!out.stderr.is_empty());
    }
    let out = run(&["run", &shipped("verify.json").to_string_lossy(), "--tol", "-1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn no_convergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shipped("heavy-top-tilt.json");
    let out = run(&["--max-iter", "1", "run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("heavy-top-tilt.report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "failed");
    assert_eq!(report["iterations"], 1);
    assert!(!dir.path().join("heavy-top-tilt.trajectory.csv").exists());
}

#[test]
fn parallel_matches_sequential() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfgs = [shipped("spline-plane.json"), shipped("ep-free-body.json"), shipped("heavy-top-upright.json")];
    let args: Vec<&str> = cfgs.iter().map(|p| p.to_str().unwrap()).collect();
    assert_eq!(run(&[&["run"], &args[..]].concat(), a.path()).status.code(), Some(0));
    assert_eq!(run(&[&["run", "--parallel"], &args[..]].concat(), b.path()).status.code(), Some(0));
    for f in std::fs::read_dir(a.path()).unwrap() {
        let name = f.unwrap().file_name();
        assert_eq!(std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap());
    }
}

#[test]
fn seed_changes_only_the_guess() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = shipped("spline-plane.json");
    let ra = run(&["--seed", "1", "run", cfg.to_str().unwrap()], a.path());
    let rb = run(&["--seed", "2", "run", cfg.to_str().unwrap()], b.path());
    assert_eq!((ra.status.code(), rb.status.code()), (Some(0), Some(0)));
    let read = |d: &Path| -> Vec<Vec<f64>> {
        std::fs::read_to_string(d.join("spline-plane.trajectory.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').skip(1).take(2).map(|x| x.parse().unwrap()).collect())
            .collect()
    };
    for (x, y) in read(a.path()).iter().zip(read(b.path()).iter()) {
        for (p, q) in x.iter().zip(y) {
            assert!((p - q).abs() < 1e-9);
        }
    }
}

#[test]
fn verify_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--suite", "cayley"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 4);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.report.json")).unwrap()).unwrap();
    assert_eq!(report["checks"].as_array().unwrap().len(), 4);
    assert_eq!(bin().args(["verify", "--suite", "nope"]).output().unwrap().status.code(), Some(2));
}
