use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcbo-gadgets"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn data(name: &str) -> String {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name);
    root.to_str().unwrap().to_string()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn gadget_build_reports_quality() {
    let out = run(&["gadget", "build", "-c", "x0 + x1 = 1", "--restarts", "6"]);
    let doc = json(&out);
    assert!(doc["gadget"]["gadget_ar"].as_f64().unwrap() >= 0.999);
    assert!(String::from_utf8_lossy(&out.stderr).contains("gadget_ar"));

    let doc = json(&run(&[
        "gadget",
        "build",
        "-c",
        "x0 + x1 = 3",
        "--restarts",
        "4",
    ]));
    assert!((doc["gadget"]["gadget_ar"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn malformed_constraint_fails_with_position() {
    let out = run(&["gadget", "build", "-c", "x0 ++ 1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("position 4"));
}

#[test]
fn store_is_reused_across_relabelings() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.json");
    let store = store.to_str().unwrap();
    let first = json(&run(&[
        "gadget",
        "build",
        "-c",
        "x0 + x1 <= 1",
        "--restarts",
        "4",
        "--store",
        store,
    ]));
    assert_eq!(first["store_hit"], false);
    let second = json(&run(&[
        "gadget",
        "build",
        "-c",
        "x4 + x2 <= 1",
        "--restarts",
        "4",
        "--store",
        store,
    ]));
    assert_eq!(second["store_hit"], true);
    assert_eq!(first["key"], second["key"]);
}

#[test]
fn solve_worked_instances() {
    let two = json(&run(&[
        "solve",
        &data("two_variable.json"),
        "--delta",
        "10",
    ]));
    assert_eq!(two["modal_ket"], "100");
    assert!(two["p_opt"].as_f64().unwrap() > 0.99);

    let three = json(&run(&[
        "solve",
        &data("three_variable.json"),
        "--delta",
        "10",
    ]));
    assert_eq!(three["modal_ket"], "01100");

    // without a penalty infeasible kets may win, but the report stays valid
    let free = json(&run(&[
        "solve",
        &data("three_variable.json"),
        "--delta",
        "0",
    ]));
    let total: f64 = free["distribution"]
        .as_array()
        .unwrap()
        .iter()
        .map(|k| k["p"].as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-4);
}

#[test]
fn sweeps_are_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "sweep",
            "single",
            "--n-max",
            "2",
            "--b-max",
            "2",
            "--instances",
            "2",
            "--restarts",
            "4",
            "--seed",
            "5",
            "--out",
            out,
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>()
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let owned = args(path.to_str().unwrap());
        let refs: Vec<&str> = owned.iter().map(String::as_str).collect();
        assert!(run(&refs).status.success());
    }
    let a = std::fs::read(a).unwrap();
    assert_eq!(a, std::fs::read(b).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# qcbo-gadgets sweep-single"));
    // 2 n values x 3 senses x 3 b values
    assert_eq!(
        text.lines().filter(|l| l.starts_with("gadget,")).count(),
        18
    );
}

#[test]
fn sweep_two_emits_both_flag_modes() {
    let out = run(&[
        "sweep",
        "two",
        "--case",
        "2",
        "--sets",
        "2",
        "--instances",
        "1",
        "--restarts",
        "4",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains(",single,"));
    assert!(text.contains(",per-constraint,"));
    assert!(!run(&["sweep", "two", "--case", "4"]).status.success());
}
