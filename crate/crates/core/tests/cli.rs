// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rieszqp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rieszqp")).args(args).current_dir(cwd).output().expect("spawn rieszqp")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TWO_NODES: &str = r#"
id = "two"
alpha = 2.0
geometry = { dim = 3, nodes = 2, shape = { kind = "sphere", radius = 1.0 } }

[[tasks]]
kind = "solve_gauss"
"#;

#[test]
fn list_shows_builtins() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rieszqp(&["list"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().count() >= 5);
}

#[test]
fn list_by_tag() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rieszqp(&["list", "--tag", "thinness"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let ids: Vec<String> = stdout(&o).lines().map(|l| l.split_whitespace().next().unwrap().to_owned()).collect();
    assert_eq!(ids, ["thinness-rho1", "thinness-rho2", "thinness-rho3"]);

    let o = rieszqp(&["list", "--tag", "no-such-tag"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).trim().is_empty());
}

#[test]
fn two_node_sphere_splits_evenly() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("two.toml"), TWO_NODES).unwrap();
    let o = rieszqp(&["run", "two.toml", "--out", "out"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("out/two/summary.json")).unwrap()).unwrap();
    assert_eq!(s["passed"], true);
    let weights = s["tasks"][0]["result"]["weights"].as_array().unwrap();
    assert_eq!(weights.len(), 2);
    for w in weights {
        assert!((w[1].as_f64().unwrap() - 0.5).abs() < 1e-12);
    }
    assert!(tmp.path().join("out/certificate.json").exists());
    assert!(tmp.path().join("out/two/task00_solve_gauss.json").exists());
}

#[test]
fn omega_on_a_node_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TWO_NODES.replace(
        "[[tasks]]",
        "field.omega.points = [{ point = [0.0, 0.0, 1.0], weight = 1.0 }]\n\n[[tasks]]",
    );
    fs::write(tmp.path().join("om.toml"), text).unwrap();
    let o = rieszqp(&["run", "om.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("d(S_omega, A)"), "{}", stderr(&o));
}

#[test]
fn parse_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "id = \"x\"\nalpha = [").unwrap();
    assert_eq!(rieszqp(&["run", "bad.toml"], tmp.path()).status.code(), Some(2));

    fs::write(tmp.path().join("unknown.toml"), format!("colour = 1\n{TWO_NODES}")).unwrap();
    assert_eq!(rieszqp(&["run", "unknown.toml"], tmp.path()).status.code(), Some(2));

    fs::write(tmp.path().join("alpha.toml"), TWO_NODES.replace("alpha = 2.0", "alpha = 3.5")).unwrap();
    let o = rieszqp(&["run", "alpha.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpha"));

    assert_eq!(rieszqp(&["run", "missing.toml"], tmp.path()).status.code(), Some(2));
}

#[test]
fn failed_expectation_exits_with_1() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TWO_NODES.replace("kind = \"solve_gauss\"", "kind = \"solve_gauss\"\nexpect_capacity = { value = 5.0, rel_tol = 0.01 }");
    fs::write(tmp.path().join("x.toml"), text).unwrap();
    let o = rieszqp(&["run", "x.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL two"));
}

#[test]
fn global_flags() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("two.toml"), TWO_NODES).unwrap();
    let o = rieszqp(&["--threads", "1", "--tol", "1e-6", "--emit-gram", "run", "two.toml", "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = tmp.path().join("o/two");
    for f in ["gram.csv", "gram.bin", "nodes.csv", "field.csv"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["tol"], 1e-6);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
id = "ball"
alpha = 1.5
geometry = { dim = 3, nodes = 300, shape = { kind = "ball", radius = 1.0 } }
field.delta_form.sigma.points = [{ point = [2.0, 0.0, 0.0], weight = 0.5 }]

[[tasks]]
kind = "representation"

[[tasks]]
kind = "balayage"
"#;
    fs::write(tmp.path().join("b.toml"), text).unwrap();
    assert_eq!(rieszqp(&["run", "b.toml", "--out", "a"], tmp.path()).status.code(), Some(0));
    assert_eq!(rieszqp(&["run", "b.toml", "--out", "b"], tmp.path()).status.code(), Some(0));
    for f in ["summary.json", "task00_representation.json", "task01_balayage.json"] {
        let a = fs::read(tmp.path().join("a/ball").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b/ball").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn thinness_suite_reports_three_bodies() {
    let tmp = tempfile::tempdir().unwrap();
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/rotation_bodies.toml");
    let o = rieszqp(&["run", file.to_str().unwrap(), "--out", "t"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    for id in ["thinness-rho1", "thinness-rho2", "thinness-rho3"] {
        let dir = tmp.path().join("t").join(id);
        assert!(dir.join("summary.json").exists());
        assert!(dir.join("task00_thinness.csv").exists());
    }
}

#[test]
fn builtin_by_id() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rieszqp(&["run", "sphere-capacity", "--out", "s"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("PASS sphere-capacity"));
}
