use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qgraph::cli::RunManifest;
use qgraph::{AlloyConfig, Edge, MetricGraph};
use tempfile::TempDir;

fn qgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qgraph"))
        .args(args)
        .env_remove("QG_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn fixtures(dir: &Path) -> (PathBuf, PathBuf) {
    let g = MetricGraph::new(
        ["a", "b", "c", "d"],
        vec![
            Edge::new("e1", "a", "b", 1.0),
            Edge::new("e2", "b", "c", 1.5),
            Edge::new("e3", "b", "d", 0.75),
            Edge::new("e4", "c", "d", 1.25),
        ],
        0.5,
        2.0,
    )
    .unwrap();
    let graph = dir.join("graph.json");
    fs::write(&graph, g.to_json()).unwrap();
    let alloy = dir.join("default.json");
    fs::write(&alloy, AlloyConfig::unit_uniform(0.0, 1.0).unwrap().to_json()).unwrap();
    (graph, alloy)
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn spectrum_example_writes_ten_rows() {
    let tmp = TempDir::new().unwrap();
    let (graph, alloy) = fixtures(tmp.path());
    let out = tmp.path().join("out");
    let run = qgraph(&["spectrum", "--graph", s(&graph), "--alloy", s(&alloy), "--seed", "7", "--k", "10", "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let text = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# qgraph ") && lines[0].contains("master_seed=7"));
    assert_eq!(lines[1], "n,lambda,residual");
    assert_eq!(lines.len(), 12);
    let residual: f64 = lines[2].split(',').nth(2).unwrap().parse().unwrap();
    assert!(residual <= 1e-8);
}

#[test]
fn usage_and_config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let (graph, _) = fixtures(tmp.path());
    let out = tmp.path().join("out");
    let missing = tmp.path().join("missing.json");
    let cases: Vec<Vec<&str>> = vec![
        vec!["frobnicate"],
        vec!["spectrum", "--out", s(&out)],
        vec!["spectrum", "--graph", s(&graph), "--k", "ten", "--out", s(&out)],
        vec!["spectrum", "--graph", s(&missing), "--out", s(&out)],
        vec!["props", "--graph", s(&graph), "--interval", "40:0", "--out", s(&out)],
        vec!["wegner", "--sizes", "4", "--samples", "10", "--out", s(&out)],
        vec!["wegner", "--sizes", "4", "--eps", "1.5", "--out", s(&out)],
        vec!["ids", "--sizes", "10,5", "--out", s(&out)],
        vec!["ids", "--lambda-grid", "1:40", "--out", s(&out)],
        vec!["ids", "--free", "--threads", "0", "--out", s(&out)],
        vec!["replay", s(&missing)],
    ];
    for args in cases {
        let run = qgraph(&args);
        assert_eq!(code(&run), 2, "{args:?}: {}", String::from_utf8_lossy(&run.stderr));
        assert!(!run.stderr.is_empty());
    }
    let run = qgraph(&["spectrum", "--graph", s(&missing), "--out", s(&out)]);
    assert!(String::from_utf8_lossy(&run.stderr).contains("--graph"));
    assert_eq!(code(&qgraph(&["--help"])), 0);
    assert_eq!(code(&qgraph(&["--version"])), 0);
}

#[test]
fn props_suites_pass_on_a_small_graph() {
    let tmp = TempDir::new().unwrap();
    let (graph, alloy) = fixtures(tmp.path());
    let out = tmp.path().join("out");
    let run = qgraph(&["props", "--graph", s(&graph), "--alloy", s(&alloy), "--seed", "3", "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let names: Vec<String> = csvs(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["bracketing.csv", "hf.csv", "interlacing.csv", "uc.csv"]);
}

#[test]
fn wegner_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let ok = qgraph(&["wegner", "--sizes", "4,8", "--eps", "0.1,0.2", "--samples", "200", "--seed", "1", "--out", s(&out), "--svg"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("wegner.svg").exists());
    assert!(fs::read_to_string(out.join("wegner_fits.csv")).unwrap().lines().count() > 2);

    // Nearly frozen couplings give a deterministic spectrum, so the window
    // counts jump between 0 and 1 and the ratio cannot be constant.
    let bad = qgraph(&["wegner", "--sizes", "4,8", "--eps", "0.1,0.2", "--samples", "100", "--disorder", "0.001", "--out", s(&out)]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("wegner.csv"));
}

#[test]
fn ids_free_chain_with_checks() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let run = qgraph(&["ids", "--sizes", "5,10", "--lambda-grid", "1:20:5", "--free", "--checks", "--partitions", "4", "--out", s(&out), "--svg"]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let names: Vec<String> = csvs(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["checks.csv", "convergence.csv", "free_limit.csv", "ids.csv"]);
    assert!(out.join("ids.svg").exists());
    let checks = fs::read_to_string(out.join("checks.csv")).unwrap();
    assert!(checks.lines().skip(2).all(|l| l.ends_with(",true")));
}

#[test]
fn reruns_replays_and_thread_counts_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (graph, alloy) = fixtures(tmp.path());
    let dir = |name: &str| tmp.path().join(name);
    let (a, b) = (dir("a"), dir("b"));
    let base = ["ids", "--nu", "2", "--sizes", "3,4", "--lambda-grid", "1:20:4", "--alloy", s(&alloy), "--seed", "5", "--checks", "--partitions", "3"];
    let mut first = base.to_vec();
    first.extend(["--out", s(&a), "--threads", "1"]);
    let mut second = base.to_vec();
    second.extend(["--out", s(&b), "--threads", "8"]);
    assert_eq!(code(&qgraph(&first)), 0);
    assert_eq!(code(&qgraph(&second)), 0);
    assert_eq!(csvs(&dir("a")), csvs(&dir("b")));

    let replay = qgraph(&["replay", s(&dir("a").join("manifest.json")), "--out", s(&dir("c"))]);
    assert_eq!(code(&replay), 0, "{}", String::from_utf8_lossy(&replay.stderr));
    assert_eq!(csvs(&dir("a")), csvs(&dir("c")));

    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(dir("a").join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.subcommand, "ids");
    assert_eq!(manifest.master_seed, 5);
    assert_eq!(manifest.config_paths, vec![alloy.clone()]);

    let (from_flag, from_env) = (dir("f"), dir("g"));
    let run = qgraph(&["spectrum", "--graph", s(&graph), "--seed", "11", "--out", s(&from_flag)]);
    assert_eq!(code(&run), 0);
    let run = Command::new(env!("CARGO_BIN_EXE_qgraph"))
        .args(["spectrum", "--graph", s(&graph), "--out", s(&from_env)])
        .env("QG_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&run), 0);
    assert_eq!(csvs(&from_flag), csvs(&from_env));
}
