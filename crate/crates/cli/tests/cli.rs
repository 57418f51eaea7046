use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mipdmn::dataset::Dataset;
use mipdmn::io;

fn dmn<S: AsRef<std::ffi::OsStr>>(dir: &Path, args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to launch dmn")
}

fn ok<S: AsRef<std::ffi::OsStr> + std::fmt::Debug>(dir: &Path, args: &[S]) -> String {
    let out = dmn(dir, args);
    assert!(
        out.status.success(),
        "dmn {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SMALL_GEN: &str = r#"{"n_materials": 12, "teacher": {"depth": 3},
  "points": [{"vf": 0.3, "q": []}, {"vf": 0.6, "q": []}],
  "test_points": [{"vf": 0.45, "q": []}]}"#;
const SMALL_TRAIN: &str = r#"{"train": {"depth": 3, "epochs": 40, "restarts": 2}}"#;

/// gen-data -> train -> eval in `out_*` subdirectories of `dir`.
fn pipeline(dir: &Path, extra: &[&str]) {
    write(dir, "gen.json", SMALL_GEN);
    write(dir, "train.json", SMALL_TRAIN);
    let with = |a: &[&'static str]| -> Vec<String> { a.iter().chain(extra).map(|s| s.to_string()).collect() };
    ok(dir, &with(&["gen-data", "--config", "gen.json", "--out", "out_data"]));
    ok(dir, &with(&["train", "--config", "train.json", "--data", "out_data/dataset.csv", "--out", "out_train"]));
    ok(
        dir,
        &with(&["eval", "--model", "out_train/model.json", "--data", "out_data/dataset.csv", "--out", "out_eval"]),
    );
}

#[test]
fn gen_data_budget_gives_1500_records_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(tmp.path(), &["gen-data", "--seed", "4"]);
    assert!(stdout.contains("1500 records"), "{stdout}");
    let ds = io::load_dataset(&tmp.path().join("out/dataset.csv")).unwrap();
    assert_eq!(ds.len(), 1500);
    let teacher = io::load_model_document(&tmp.path().join("out/teacher.json")).unwrap();
    assert_eq!(teacher.role.as_deref(), Some("teacher"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "gen-data");
    assert_eq!(manifest["seeds"]["teacher"], 4);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
    for a in manifest["outputs"].as_array().unwrap() {
        assert_eq!(a["sha256"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn train_on_empty_dataset_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    io::save_dataset(&tmp.path().join("empty.csv"), &Dataset::new(0)).unwrap();
    let out = dmn(tmp.path(), &["train", "--data", "empty.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("ConfigError:"));
}

#[test]
fn error_categories() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "bad.json", r#"{"n_materiels": 3}"#);
    let out = dmn(tmp.path(), &["gen-data", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("ConfigError:"));

    let out = dmn(tmp.path(), &["train", "--data", "missing.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("DataError:"));

    write(tmp.path(), "garbage.csv", "vf,split\nnot,a,dataset\n");
    let out = dmn(tmp.path(), &["train", "--data", "garbage.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn numerical_failures_have_their_own_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "gen.json", SMALL_GEN);
    ok(tmp.path(), &["gen-data", "--config", "gen.json"]);
    write(
        tmp.path(),
        "sim.json",
        r#"{"solver": {"max_iter": 1, "rtol": 1e-12, "aitken": false}, "path": {"kind": "cyclic", "steps": 2}}"#,
    );
    let out = dmn(tmp.path(), &["simulate", "--model", "out/teacher.json", "--config", "sim.json", "--out", "sim"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("NumericalError:"));
}

#[test]
fn predict_with_identical_phases_gives_identical_rows() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "gen.json", SMALL_GEN);
    ok(tmp.path(), &["gen-data", "--config", "gen.json"]);
    write(
        tmp.path(),
        "predict.json",
        r#"{"vf": [0.0, 0.5, 1.0],
            "phases": [{"class": "isotropic", "e": 5000.0, "nu": 0.3}, {"class": "isotropic", "e": 5000.0, "nu": 0.3}],
            "conductivity": [2.0, 2.0], "cte": [1e-5, 1e-5]}"#,
    );
    ok(tmp.path(), &["predict", "--model", "out/teacher.json", "--config", "predict.json", "--out", "pred"]);
    let mut r = csv::Reader::from_path(tmp.path().join("pred/predict.csv")).unwrap();
    let rows: Vec<Vec<f64>> = r
        .records()
        .map(|rec| rec.unwrap().iter().skip(1).map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    // Blocks: 21 stiffness entries, 6 conductivity, 6 CTE; tolerance relative to each block's scale.
    for block in [0..21, 21..27, 27..33] {
        let scale = rows[0][block.clone()].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for row in &rows[1..] {
            for k in block.clone() {
                assert!((row[k] - rows[0][k]).abs() <= 1e-12 * scale, "column {k}: {} vs {}", row[k], rows[0][k]);
            }
        }
    }
}

#[test]
fn pipeline_is_deterministic_across_reruns_and_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), &[]);
    pipeline(b.path(), &["--threads", "1"]);
    for f in ["out_data/dataset.csv", "out_train/model.json", "out_train/history.csv", "out_eval/quantiles.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn output_csvs_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    pipeline(d, &[]);
    ok(d, &["simulate", "--model", "out_train/model.json", "--out", "out_sim"]);

    let ds = io::load_dataset(&d.join("out_data/dataset.csv")).unwrap();
    let mut buf = Vec::new();
    io::write_dataset_csv(&mut buf, &ds).unwrap();
    assert_eq!(buf, fs::read(d.join("out_data/dataset.csv")).unwrap());

    let hist = io::load_with(&d.join("out_train/history.csv"), io::read_history_csv).unwrap();
    let mut buf = Vec::new();
    io::write_history_csv(&mut buf, &hist).unwrap();
    assert_eq!(buf, fs::read(d.join("out_train/history.csv")).unwrap());

    let q = io::load_with(&d.join("out_eval/quantiles.csv"), io::read_quantiles_csv).unwrap();
    let mut buf = Vec::new();
    io::write_quantiles_csv(&mut buf, 0, &q).unwrap();
    assert_eq!(buf, fs::read(d.join("out_eval/quantiles.csv")).unwrap());

    let res = io::load_with(&d.join("out_sim/results.csv"), io::read_results_csv).unwrap();
    let mut buf = Vec::new();
    io::write_results_csv(&mut buf, &res).unwrap();
    assert_eq!(buf, fs::read(d.join("out_sim/results.csv")).unwrap());
    assert_eq!(res.len(), 101);
}

#[test]
fn simulate_reads_a_load_path_file() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "gen.json", SMALL_GEN);
    ok(tmp.path(), &["gen-data", "--config", "gen.json"]);
    write(tmp.path(), "path.csv", "t,e11,e22,e12,e33,e13,e23\n0,0,0,0,0,0,0\n1,0.001,0,0,0,0,0\n2,0.002,0,0,0,0,0\n");
    let stdout = ok(tmp.path(), &["simulate", "--model", "out/teacher.json", "--path", "path.csv", "--out", "sim"]);
    assert!(stdout.contains("2 increments"), "{stdout}");
}

#[test]
fn identify_recovers_a_synthetic_target() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "gen.json", SMALL_GEN);
    ok(tmp.path(), &["gen-data", "--config", "gen.json"]);
    ok(tmp.path(), &["identify", "--model", "out/teacher.json", "--out", "id"]);
    let res: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("id/identified.json")).unwrap()).unwrap();
    assert!(res["rel_error"].as_f64().unwrap() < 5e-3);
    let hist = fs::read_to_string(tmp.path().join("id/identify_history.csv")).unwrap();
    assert!(hist.starts_with("iteration,loss\n0,"));
}

#[test]
fn info_reports_parameter_counts_and_active_nodes() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "gen.json", SMALL_GEN);
    ok(tmp.path(), &["gen-data", "--config", "gen.json"]);
    let stdout = ok(tmp.path(), &["info", "out/teacher.json", "--out", "info"]);
    assert!(stdout.contains("L = 3"), "{stdout}");
    assert!(stdout.contains("16 weight + 28 rotation = 44"), "{stdout}");
    assert!(stdout.contains("role: teacher"), "{stdout}");
    let table = fs::read_to_string(tmp.path().join("info/active_nodes.csv")).unwrap();
    // Teacher weights scale with vf, so phase 2 is inactive at vf = 0 and phase 1 at vf = 1.
    assert!(table.contains("\n0.0,4,0,1.0,0.0\n"), "{table}");
    assert!(table.ends_with("\n1.0,0,4,0.0,1.0\n"), "{table}");
}
