use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use frgm::io::{read_matrix, read_points, write_matrix, write_points};
use frgm::{hungarian, PointSet};
use nalgebra::DMatrix;
use serde_json::Value;

fn frgm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frgm"))
        .args(args)
        .env("FRGM_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn points(n: usize) -> PointSet<f64> {
    PointSet::new(DMatrix::from_fn(n, 2, |i, k| {
        let t = i as f64 * 2.399 + k as f64 * 1.1;
        t.sin() * (1.0 + 0.1 * i as f64)
    }))
    .unwrap()
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("e.csv");
    write_matrix(&e, &points(10).distance_matrix()).unwrap();
    (dir, e)
}

#[test]
fn identical_graphs_match_identically() {
    let (dir, e) = setup();
    let out = dir.path().join("m.json");
    let soft = dir.path().join("soft.csv");
    let o = frgm(&[
        "match-g",
        "--e1",
        s(&e),
        "--e2",
        s(&e),
        "--out",
        s(&out),
        "--soft",
        s(&soft),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out);
    let assign: Vec<u64> = serde_json::from_value(v["assignment"].clone()).unwrap();
    assert_eq!(assign, (0..10).collect::<Vec<u64>>());
    assert!(v["objective_trace"].as_array().unwrap().len() >= 1);
    assert_eq!(v["soft"], Value::String(s(&soft).into()));
    assert_eq!(read_matrix(&soft).unwrap().shape(), (10, 10));
}

#[test]
fn missing_file_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let o = frgm(&[
        "match-g",
        "--e1",
        "/nonexistent/a.csv",
        "--e2",
        "/nonexistent/b.csv",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn malformed_csv_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "0,1\n1,x\n").unwrap();
    let o = frgm(&["lap", "--cost", s(&bad)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn invalid_settings_are_config_errors() {
    let (dir, e) = setup();
    let out = dir.path().join("m.json");
    let o = frgm(&[
        "match-g",
        "--e1",
        s(&e),
        "--e2",
        s(&e),
        "--out",
        s(&out),
        "--alpha1",
        "3",
    ]);
    assert_eq!(code(&o), 4);
    let o = frgm(&[
        "match-g",
        "--e1",
        s(&e),
        "--e2",
        s(&e),
        "--out",
        s(&out),
        "--solver",
        "newton",
    ]);
    assert_eq!(code(&o), 4);
    let o = frgm(&["bench", "--preset", "paper-noise"]);
    assert_eq!(code(&o), 4, "bench requires --seed");
    let o = frgm(&["bench", "--preset", "nope", "--seed", "1"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn afw_and_fw_objectives_agree() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    let o = frgm(&[
        "synth",
        "points",
        "--n-in",
        "12",
        "--noise",
        "0.05",
        "--seed",
        "4",
        "--out-dir",
        s(&inst),
    ]);
    assert_eq!(code(&o), 0);
    let e1 = dir.path().join("e1.csv");
    let e2 = dir.path().join("e2.csv");
    write_matrix(&e1, &read_points(inst.join("v1.csv")).unwrap().distance_matrix()).unwrap();
    write_matrix(&e2, &read_points(inst.join("v2.csv")).unwrap().distance_matrix()).unwrap();
    let mut finals = Vec::new();
    for solver in ["fw", "afw"] {
        let out = dir.path().join(format!("{solver}.json"));
        let o = frgm(&[
            "match-g",
            "--e1",
            s(&e1),
            "--e2",
            s(&e2),
            "--out",
            s(&out),
            "--solver",
            solver,
        ]);
        assert_eq!(code(&o), 0);
        let v = read_json(&out);
        // stage two is anchored on each run's own stage-one result
        finals.push(
            v["stage1_objective_trace"]
                .as_array()
                .unwrap()
                .last()
                .unwrap()
                .as_f64()
                .unwrap(),
        );
    }
    assert!((finals[1] - finals[0]).abs() <= 0.02 * finals[0].abs(), "{finals:?}");
}

#[test]
fn lap_matches_hungarian() {
    let dir = tempfile::tempdir().unwrap();
    let c = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
    let path = dir.path().join("c.csv");
    write_matrix(&path, &c).unwrap();
    let out = dir.path().join("lap.json");
    let o = frgm(&["lap", "--cost", s(&path), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    let expect = hungarian(&c).unwrap();
    let assign: Vec<usize> = serde_json::from_value(printed["assignment"].clone()).unwrap();
    assert_eq!(assign, expect.assignment.assign());
    assert_eq!(printed["objective"].as_f64().unwrap(), expect.objective);
    assert_eq!(read_json(&out), printed);
}

#[test]
fn bench_preset_has_grid_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let plot = dir.path().join("r.svg");
    let o = frgm(&[
        "bench",
        "--preset",
        "paper-noise",
        "--seed",
        "3",
        "--seeds",
        "1",
        "--out",
        s(&out),
        "--plot",
        s(&plot),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("method,n_in,noise,n_out,mean_acc,std_acc,mean_err,mean_time_s,n_seeds"));
    assert_eq!(lines.len(), 1 + 2 * 11);
    assert!(std::fs::read_to_string(&plot).unwrap().contains("<svg"));
}

#[test]
fn bench_grid_file_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("g.toml");
    std::fs::write(
        &grid,
        "methods = [\"euclid\", \"general\"]\nn_in = [8]\nnoise = [0.0, 0.1]\nseeds = 2\n",
    )
    .unwrap();
    let acc = |name: &str| {
        let out = dir.path().join(name);
        let o = frgm(&["bench", "--grid", s(&grid), "--seed", "5", "--out", s(&out)]);
        assert_eq!(code(&o), 0);
        let text = std::fs::read_to_string(&out).unwrap();
        // drop the timing column
        text.lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(7);
                f.join(",")
            })
            .collect::<Vec<_>>()
    };
    let a = acc("a.csv");
    assert_eq!(a.len(), 5);
    assert_eq!(a, acc("b.csv"));
}

#[test]
fn rotated_template_angle_recovered() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    let theta = 0.7f64;
    let o = frgm(&[
        "synth",
        "deformed",
        "--template",
        "fish",
        "--theta",
        "0.7",
        "--scale",
        "1.5",
        "--translation",
        "0.3,-0.2",
        "--seed",
        "2",
        "--out-dir",
        s(&inst),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let truth = read_json(&inst.join("transform.json"));
    assert!((truth["angle_deg"].as_f64().unwrap() - theta.to_degrees()).abs() < 1e-9);
    let out = dir.path().join("d.json");
    let tf = dir.path().join("t.json");
    let aligned = dir.path().join("aligned.csv");
    let o = frgm(&[
        "match-d",
        "--v1",
        s(&inst.join("v1.csv")),
        "--v2",
        s(&inst.join("v2.csv")),
        "--variant",
        "similarity",
        "--out",
        s(&out),
        "--transform",
        s(&tf),
        "--aligned",
        s(&aligned),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_json(&tf);
    assert_eq!(t["type"], "similarity");
    assert!(
        (t["angle_deg"].as_f64().unwrap() - theta.to_degrees()).abs() < 1.0,
        "{t}"
    );
    assert!((t["s"].as_f64().unwrap() - 1.5).abs() < 1e-3);
    assert_eq!(read_json(&out)["transform"], t);
    let truth_idx: Vec<usize> = serde_json::from_value(read_json(&inst.join("truth.json"))["truth"].clone()).unwrap();
    let assign: Vec<usize> = serde_json::from_value(read_json(&out)["assignment"].clone()).unwrap();
    assert_eq!(assign, truth_idx);
}

#[test]
fn remove_outliers_and_config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    let o = frgm(&[
        "synth",
        "points",
        "--n-in",
        "15",
        "--n-out",
        "10",
        "--seed",
        "4",
        "--out-dir",
        s(&inst),
    ]);
    assert_eq!(code(&o), 0);
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "[outlier]\noutlier_k = 1.5\noutlier_rounds = 2\n[solver]\nmax_iter = 50\n",
    )
    .unwrap();
    let out = dir.path().join("o.json");
    let (v1, v2) = (inst.join("v1.csv"), inst.join("v2.csv"));
    let args = [
        "remove-outliers",
        "--v1",
        s(&v1),
        "--v2",
        s(&v2),
        "--out",
        s(&out),
        "--config",
        s(&cfg),
        "--verbose",
        "--outlier-k",
        "3",
    ];
    let o = frgm(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("k: 3.0"), "{err}");
    assert!(err.contains("rounds: 2"), "{err}");
    assert!(err.contains("max_iter: 50"), "{err}");
    let v = read_json(&out);
    let kept: Vec<usize> = serde_json::from_value(v["kept"].clone()).unwrap();
    assert!(kept.len() >= 15 && kept.len() <= 25);
    let first = std::fs::read(&out).unwrap();
    assert_eq!(code(&frgm(&args)), 0);
    assert_eq!(std::fs::read(&out).unwrap(), first);
}

#[test]
fn match_e_on_point_files() {
    let dir = tempfile::tempdir().unwrap();
    let v1 = dir.path().join("v1.json");
    let v2 = dir.path().join("v2.csv");
    let p = points(12);
    write_points(&v1, &p).unwrap();
    write_points(&v2, &p.select(&[11, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0]).unwrap()).unwrap();
    let out = dir.path().join("e.json");
    let o = frgm(&[
        "match-e",
        "--v1",
        s(&v1),
        "--v2",
        s(&v2),
        "--out",
        s(&out),
        "--adjacency",
        "delaunay",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let assign: Vec<usize> = serde_json::from_value(read_json(&out)["assignment"].clone()).unwrap();
    assert_eq!(assign, (0..12).rev().collect::<Vec<_>>());
    let o = frgm(&[
        "match-e",
        "--v1",
        s(&v1),
        "--v2",
        s(&v2),
        "--out",
        s(&out),
        "--adjacency",
        "ring",
    ]);
    assert_eq!(code(&o), 4);
}
