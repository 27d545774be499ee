use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_msbaco"))
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

/// A small but complete configuration for the bundled Iris data.
fn write_config(dir: &Path) -> PathBuf {
    let p = dir.join("quick.toml");
    let body = format!(
        "dataset = {:?}\nn_init = 10\ne_bet = 20\nmax_epochs = 200\nmax_iterations = 3\nants = 10\ngen_max = 5\nseed = 40\n",
        data("iris.csv")
    );
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    let o = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--seeds",
        "2",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    for s in [40, 41] {
        let result = read_json(&out.join(format!("result_{s}.json")));
        assert_eq!(result["seeds"]["master"], s);
        let iterations = result["iterations"].as_array().unwrap();
        for it in iterations {
            let k = it["iteration"].as_u64().unwrap();
            let curve =
                std::fs::read_to_string(out.join(format!("curve_iter{k}_{s}.csv"))).unwrap();
            let mut lines = curve.lines();
            assert_eq!(
                lines.next().unwrap(),
                "generation,best_validation_ce,best_objective,best_popcount"
            );
            assert_eq!(lines.count(), 5);
        }
        let hist = std::fs::read_to_string(out.join(format!("corr_hist_{s}.csv"))).unwrap();
        assert_eq!(hist.lines().count(), 21);
        let contrib = std::fs::read_to_string(out.join(format!("contributions_{s}.csv"))).unwrap();
        assert_eq!(contrib.lines().count(), 11);
        assert!(out.join(format!("network_{s}.json")).exists());
    }

    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(
        lines[0],
        "seed,test_accuracy,test_ce,final_width,wall_clock_seconds"
    );
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("mean±std,"));

    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["seeds"], serde_json::json!([40, 41]));
    for a in manifest["artifacts"].as_array().unwrap() {
        assert!(Path::new(a.as_str().unwrap()).exists(), "{a}");
    }
    // no staging directory left behind
    let leftovers = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with(".staging")
        })
        .count();
    assert_eq!(leftovers, 0);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    let o = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--heuristic",
        "H1",
        "--n-init",
        "6",
        "--max-iterations",
        "1",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["config"]["heuristic"], "H1");
    assert_eq!(manifest["config"]["n_init"], 6);
    assert_eq!(manifest["config"]["baco"]["ants"], 10);
}

#[test]
fn baselines_keep_full_width() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    let o = run(&[
        "baselines",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[3], "10");
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, jobs) in [(&a, "1"), (&b, "2")] {
        let o = run(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--seeds",
            "2",
            "--jobs",
            jobs,
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    for f in [
        "result_40.json",
        "result_41.json",
        "network_40.json",
        "curve_iter1_41.csv",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn analyze_reproduces_final_contributions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    assert!(run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap()
    ])
    .status
    .success());
    let result = read_json(&out.join("result_40.json"));
    let split = result["seeds"]["split"].as_u64().unwrap().to_string();
    let phase = result["seeds"]["final_phase"].as_u64().unwrap().to_string();
    let report_path = dir.path().join("analysis.json");
    let o = run(&[
        "analyze",
        "--network",
        out.join("network_40.json").to_str().unwrap(),
        "--dataset",
        data("iris.csv").to_str().unwrap(),
        "--split-seed",
        &split,
        "--phase-seed",
        &phase,
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&report_path);
    let c = report["C"].as_array().unwrap();
    let expect = result["final_contributions"].as_array().unwrap();
    assert_eq!(c.len(), expect.len());
    for (a, b) in c.iter().zip(expect) {
        assert!((a.as_f64().unwrap() - b.as_f64().unwrap()).abs() <= 1e-9);
    }
    let n = c.len();
    assert_eq!(report["R"].as_array().unwrap().len(), n);
    assert_eq!(report["TE"].as_array().unwrap().len(), n);
}

#[test]
fn analyze_rejects_mismatched_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    assert!(run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--max-iterations",
        "1",
        "--out-dir",
        out.to_str().unwrap()
    ])
    .status
    .success());
    let o = run(&[
        "analyze",
        "--network",
        out.join("network_40.json").to_str().unwrap(),
        "--dataset",
        data("wine.csv").to_str().unwrap(),
        "--out",
        dir.path().join("x.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn missing_dataset_exits_with_dataset_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.csv");
    let o = run(&[
        "run",
        "--dataset",
        missing.to_str().unwrap(),
        "--out-dir",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.csv"));
    assert!(!dir.path().join("o").join("summary.csv").exists());
}

#[test]
fn bad_configuration_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, format!("dataset = {:?}\nrho = 2.0\n", data("iris.csv"))).unwrap();
    let o = run(&[
        "run",
        "--config",
        p.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(&p, "dataset = \"iris.csv\"\nnot_a_field = 1\n").unwrap();
    let o = run(&["run", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&[
        "run",
        "--dataset",
        data("iris.csv").to_str().unwrap(),
        "--heuristic",
        "H9",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&[
        "run",
        "--config",
        dir.path().join("absent.toml").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
