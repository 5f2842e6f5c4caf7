use std::path::Path;
use std::process::{Command, Output};

use cfexplain::data::load_csv;
use cfexplain::models::{Model, Predictor};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfexplain"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_train_explain_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    let model = dir.path().join("model.json");
    let out = cli(&[
        "synth",
        "--rows",
        "300",
        "--features",
        "5",
        "--seed",
        "3",
        "--out",
        s(&csv),
    ]);
    assert!(out.status.success());
    let data = load_csv(&csv, "target").unwrap();
    assert_eq!((data.n_rows(), data.n_features()), (300, 5));

    let report = json(&cli(&[
        "train",
        "--data",
        s(&csv),
        "--family",
        "svc",
        "--folds",
        "3",
        "--out",
        s(&model),
    ]));
    assert!(report["cross_validation"]["accuracy"].as_f64().unwrap() > 0.6);
    let saved = Model::load(&model).unwrap();
    assert_eq!(saved.family(), "svc");

    let row = (0..data.n_rows())
        .find(|&i| saved.classify(data.row(i)) == 0)
        .unwrap()
        .to_string();
    let result = json(&cli(&[
        "explain",
        "--data",
        s(&csv),
        "--model",
        s(&model),
        "--row",
        &row,
        "--format",
        "json",
    ]));
    assert_eq!(result["mode"], "negative");
    assert_eq!(result["strategy"], "baseline");
    assert!(result["text"]
        .as_str()
        .unwrap()
        .starts_with("Your application was denied"));
    let x_cf: Vec<f64> = serde_json::from_value(result["x_cf"].clone()).unwrap();
    let achieved = result["y_achieved"].as_f64().unwrap();
    assert_eq!(saved.score(&x_cf), achieved);

    let text = cli(&[
        "explain",
        "--data",
        s(&csv),
        "--model",
        s(&model),
        "--row",
        &row,
    ]);
    assert!(String::from_utf8_lossy(&text.stdout).contains("would have been approved"));
}

#[test]
fn explain_inline_values_and_positive_mode() {
    let small = ["--synthetic-rows", "300", "--synthetic-features", "3"];
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cf.json");
    let weights = json(&cli(&[&["weights"][..], &small].concat()));
    assert_eq!(weights["f_values"].as_array().unwrap().len(), 3);
    assert!(weights["theta_knn"].is_null());

    let mut args = vec![
        "explain",
        "--mode",
        "positive",
        "--row",
        "0",
        "--json",
        s(&file),
    ];
    args.extend(small);
    let out = cli(&args);
    // row 0 may be rejected; positive mode then refuses it
    if out.status.success() {
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&file).unwrap()).unwrap();
        assert_eq!(v["mode"], "positive");
        assert_eq!(v["y_target"], 0.5);
    } else {
        assert_eq!(out.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&out.stderr).contains("accepted instance"));
    }

    let mut args = vec!["explain", "--row", "5", "--format", "json"];
    args.extend(small);
    let by_row = json(&cli(&args));
    let values: Vec<String> = by_row["x_original"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap().to_string())
        .collect();
    let joined = values.join(",");
    let mut args = vec!["explain", "--values", &joined, "--format", "json"];
    args.extend(small);
    let by_values = json(&cli(&args));
    assert_eq!(by_row, by_values);
}

#[test]
fn errors_exit_with_status_two() {
    let small = ["--synthetic-rows", "200", "--synthetic-features", "3"];
    for bad in [
        vec!["explain", "--row", "100000"],
        vec!["explain", "--values", "1,2"],
        vec!["explain", "--row", "0", "--epsilon", "0.7"],
        vec!["explain", "--row", "0", "--family", "forest"],
    ] {
        let out = cli(&[&bad[..], &small].concat());
        assert_eq!(out.status.code(), Some(2), "{bad:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
    // argument errors are clap's
    assert!(!cli(&["explain"]).status.success());
    assert!(!cli(&["benchmark", "--strategies", "bogus"])
        .status
        .success());
}

#[test]
fn benchmark_check_mode_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = cli(&[
        "benchmark",
        "--synthetic-rows",
        "300",
        "--synthetic-features",
        "5",
        "--models",
        "logreg",
        "--strategies",
        "baseline,uniform",
        "--instances",
        "3",
        "--no-power",
        "--check",
        "--report",
        s(&report),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("PASS uniform_equals_baseline/logreg"));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["size"].as_array().unwrap().len(), 2);
    assert_eq!(v["plan"]["size"]["n_instances"], 3);

    // a plan whose only grid entry cannot train fails its checks
    let plan = dir.path().join("plan.json");
    std::fs::write(
        &plan,
        r#"{"grids": {"logreg": [{"model": "log_reg", "learning_rate": -1.0}]}}"#,
    )
    .unwrap();
    let out = cli(&[
        "benchmark",
        "--synthetic-rows",
        "300",
        "--synthetic-features",
        "5",
        "--models",
        "logreg",
        "--strategies",
        "baseline",
        "--instances",
        "3",
        "--no-power",
        "--check",
        "--config",
        s(&plan),
        "--report",
        s(&report),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
