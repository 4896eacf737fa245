use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TOY: &str = include_str!("../../core/data/toy.jsonlines");

fn coref(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coref"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = coref(args);
    assert!(
        out.status.success(),
        "coref {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn toy_file(dir: &Path) -> PathBuf {
    let path = dir.join("toy.jsonlines");
    std::fs::write(&path, TOY).unwrap();
    path
}

#[test]
fn evaluating_gold_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let gold = toy_file(dir.path());
    let report = dir.path().join("report.json");
    ok(&["evaluate", "--gold", s(&gold), "--pred", s(&gold), "--report", s(&report), "--jobs", "3"]);
    let r = json(&report);
    for m in ["muc", "b_cubed", "ceaf_phi4"] {
        assert_eq!(r[m]["f1"].as_f64(), Some(1.0), "{m}");
    }
    assert_eq!(r["avg_f1"].as_f64(), Some(1.0));
    let manifest = json(&dir.path().join("report.json.manifest.json"));
    assert_eq!(manifest["command"], "evaluate");
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 1);
}

#[test]
fn hand_checked_muc_on_one_document() {
    // Gold {0,7} {2,9,14} {10-12,16}; predicted {0,7,2} {9,14}.
    // Recall (1 + 1 + 0) / (1 + 2 + 1), precision (1 + 1) / (2 + 1).
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.jsonlines");
    std::fs::write(&gold, TOY.lines().next().unwrap()).unwrap();
    let pred = dir.path().join("pred.jsonlines");
    std::fs::write(
        &pred,
        r#"{"doc_key":"nw/toy/00/toy_0000_0","clusters":[[[0,0],[7,7],[2,2]],[[9,9],[14,14]]]}"#,
    )
    .unwrap();
    let report = dir.path().join("report.json");
    ok(&["evaluate", "--gold", s(&gold), "--pred", s(&pred), "--report", s(&report)]);
    let muc = &json(&report)["muc"];
    let (p, r) = (2.0 / 3.0, 0.5);
    assert!((muc["precision"].as_f64().unwrap() - p).abs() < 1e-12);
    assert!((muc["recall"].as_f64().unwrap() - r).abs() < 1e-12);
    assert!((muc["f1"].as_f64().unwrap() - 2.0 * p * r / (p + r)).abs() < 1e-12);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(coref(&["evaluate"]).status.code(), Some(2));
    assert_eq!(coref(&["no-such-command"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let gold = toy_file(dir.path());
    let report = dir.path().join("r.json");
    let out = coref(&["--set", "no_such_key=1", "evaluate", "--gold", s(&gold), "--pred", s(&gold), "--report", s(&report)]);
    assert_eq!(out.status.code(), Some(2));
    let out = coref(&["--jobs", "0", "evaluate", "--gold", s(&gold), "--pred", s(&gold), "--report", s(&report)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.jsonlines");
    let report = dir.path().join("r.json");
    let out = coref(&["evaluate", "--gold", s(&missing), "--pred", s(&missing), "--report", s(&report)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_predict_analyze_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let toy = toy_file(d);
    let model = d.join("model.ckpt");
    let small = ["--seed", "5", "--set", "hidden=16", "--set", "feature_dim=8", "--embed-dim", "16", "--set", "hoi.method=aa"];
    let mut args: Vec<&str> = small.to_vec();
    args.extend(["--set", "epochs=2", "train", "--train", s(&toy), "--out", s(&model)]);
    ok(&args);
    assert!(d.join("model.ckpt.manifest.json").exists());
    assert_eq!(json(&d.join("model.history.json"))["history"].as_array().unwrap().len(), 2);

    let with = d.join("aa.jsonlines");
    let without = d.join("none.jsonlines");
    ok(&["predict", "--model", s(&model), "--input", s(&toy), "--out", s(&with), "--jobs", "2"]);
    ok(&["predict", "--model", s(&model), "--input", s(&toy), "--out", s(&without), "--hoi", "none"]);
    for line in std::fs::read_to_string(&without).unwrap().lines() {
        let p: Value = serde_json::from_str(line).unwrap();
        assert_eq!(p["antecedents"], p["pre_hoi_antecedents"]);
    }

    // Worker count must not change predictions.
    let serial = d.join("aa1.jsonlines");
    ok(&["predict", "--model", s(&model), "--input", s(&toy), "--out", s(&serial), "--jobs", "1"]);
    assert_eq!(std::fs::read(&with).unwrap(), std::fs::read(&serial).unwrap());

    let analysis = d.join("analysis.json");
    ok(&["analyze", "--before", s(&without), "--after", s(&with), "--gold", s(&toy), "--out", s(&analysis)]);
    let a = json(&analysis);
    assert!(a["link_change"]["w2c"].is_u64());
    assert!(a["pronouns"]["before"].is_object());
    let self_view = d.join("analysis_self.json");
    ok(&["analyze", "--before", s(&with), "--gold", s(&toy), "--out", s(&self_view)]);

    let ablation = d.join("hoi_off.json");
    ok(&["hoi-off", "--model", s(&model), "--input", s(&toy), "--report", s(&ablation)]);
    let h = json(&ablation);
    let diff = h["with_hoi"]["avg_f1"].as_f64().unwrap() - h["without_hoi"]["avg_f1"].as_f64().unwrap();
    assert!((h["drop"].as_f64().unwrap() - diff).abs() < 1e-12);

    let report = d.join("eval.json");
    ok(&["evaluate", "--gold", s(&toy), "--pred", s(&with), "--report", s(&report)]);
    let f = json(&report)["avg_f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f));
}

#[test]
fn preprocess_segments_conll() {
    let dir = tempfile::tempdir().unwrap();
    let conll = dir.path().join("doc_conll");
    std::fs::write(
        &conll,
        "#begin document (nw/x); part 000\n\
         nw/x 0 0 Mary NNP * - - - spk * (0)\n\
         nw/x 0 1 left VBD * - - - spk * -\n\
         nw/x 0 2 . . * - - - spk * -\n\
         \n\
         nw/x 0 0 She PRP * - - - spk * (0)\n\
         nw/x 0 1 returned VBD * - - - spk * -\n\
         nw/x 0 2 . . * - - - spk * -\n\
         \n\
         #end document\n",
    )
    .unwrap();
    let out = dir.path().join("out.jsonlines");
    ok(&["preprocess", "--input", s(&conll), "--output", s(&out), "--max-seg-len", "4"]);
    let doc: Value = serde_json::from_str(std::fs::read_to_string(&out).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(doc["clusters"], serde_json::json!([[[0, 0], [3, 3]]]));
    assert_eq!(doc["segments"], serde_json::json!([[0, 2], [3, 5]]));
}
