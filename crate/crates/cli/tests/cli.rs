use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use trustcheck_core::harness::{parse_report_csv, parse_report_json};
use trustcheck_core::scorefile::{emit_scores, parse_scores, ScoreFileRecord, ScoreFormat};

const SMALL: [&str; 6] = ["--n-per-class", "400", "--n-train", "500", "--splits", "2"];

/// Scores whose D_β statistics are 2, 0.5, 3 and 0.1 with error bits 1, 0, 0, 1.
const HAND: &str = "id,label,v1,v2,v3,v4,v5,kind
a,1,0.333333333333,0.166666666667,0.166666666667,0.166666666667,0.166666666666,softmax
b,0,0.666666666667,0.083333333333,0.083333333333,0.083333333333,0.083333333334,softmax
c,0,0.25,0.1875,0.1875,0.1875,0.1875,softmax
d,1,0.909090909091,0.022727272727,0.022727272727,0.022727272727,0.022727272728,softmax
";

fn trustcheck(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_trustcheck"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn binary_file(dir: &Path) -> std::path::PathBuf {
    let mut text = String::from("id,label,v1,v2,kind\n");
    let mut state = 12345u64;
    for i in 0..200 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let p = (state >> 11) as f64 / (1u64 << 53) as f64;
        let label = (state >> 7) % 3 == 0;
        text.push_str(&format!("r{i},{},{},{},softmax\n", u8::from(label), 1.0 - p, p));
    }
    let path = dir.join("binary.csv");
    fs::write(&path, text).unwrap();
    path
}

fn eval_json(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("eval.json")).unwrap()).unwrap()
}

fn method_entry<'a>(v: &'a serde_json::Value, name: &str) -> &'a serde_json::Value {
    v["methods"].as_array().unwrap().iter().find(|m| m["method"] == name).unwrap()
}

#[test]
fn synth_writes_reports_and_prints_type_errors() {
    let dir = TempDir::new().unwrap();
    let mut args = vec!["synth", "--out-dir", path_str(dir.path())];
    args.extend(SMALL);
    let out = trustcheck(&args, &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("eps0"));
    for name in ["report.json", "report.csv", "roc_d_star.csv", "roc_d_alpha.csv", "roc_sr.csv"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let report = parse_report_json::<f64>(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.per_split.len(), 2);
    let rows = parse_report_csv(&fs::read(dir.path().join("report.csv")).unwrap()).unwrap();
    assert!(rows.iter().any(|r| r.split == "mean" && r.metric == "auroc_exact"));
}

#[test]
fn sigma4_both_modes_reports_exact_and_grid() {
    let dir = TempDir::new().unwrap();
    let mut args = vec!["synth", "--sigma", "4", "--roc-mode", "both", "--out-dir", path_str(dir.path())];
    args.extend(SMALL);
    let out = trustcheck(&args, &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = parse_report_json::<f64>(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.config.sigma, 4.0);
    for m in &report.aggregate.methods {
        assert!(m.auroc_exact.is_some() && m.auroc_grid.is_some(), "{:?}", m.method);
    }
    let sr_line = stdout(&out).lines().find(|l| l.starts_with("sr ")).unwrap().to_string();
    assert!(!sr_line.contains(" - "), "{sr_line}");
}

#[test]
fn invalid_config_value_names_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"sigma": -1.0}"#).unwrap();
    let out = trustcheck(&["synth", "--config", path_str(&cfg), "--out-dir", path_str(dir.path())], &[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("sigma"), "{}", stderr(&out));
    assert!(!dir.path().join("report.json").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"sigmaa": 2.0}"#).unwrap();
    let out = trustcheck(&["synth", "--config", path_str(&cfg), "--out-dir", path_str(dir.path())], &[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("sigmaa"), "{}", stderr(&out));
}

#[test]
fn eval_hand_file_counts_at_threshold() {
    let dir = TempDir::new().unwrap();
    let scores = dir.path().join("hand.csv");
    fs::write(&scores, HAND).unwrap();
    let out = trustcheck(
        &["eval", "--scores", path_str(&scores), "--methods", "d_beta", "--gamma", "1", "--out-dir", path_str(dir.path())],
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("FR 1 TR 1 FA 1 TA 1"), "{}", stdout(&out));
    let v = eval_json(dir.path());
    let counts = &method_entry(&v, "d_beta")["counts"];
    for key in ["false_rejections", "true_rejections", "false_acceptances", "true_acceptances"] {
        assert_eq!(counts[key], 1, "{key}");
    }
}

#[test]
fn eval_refuses_single_error_class() {
    let dir = TempDir::new().unwrap();
    let scores = dir.path().join("clean.csv");
    fs::write(&scores, "id,label,v1,v2,kind\na,0,0.9,0.1,softmax\nb,1,0.2,0.8,softmax\n").unwrap();
    let out = trustcheck(&["eval", "--scores", path_str(&scores), "--out-dir", path_str(dir.path())], &[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("both correct and wrong"), "{}", stderr(&out));
}

#[test]
fn eval_binary_sr_matches_d_alpha() {
    let dir = TempDir::new().unwrap();
    let scores = binary_file(dir.path());
    let out = trustcheck(
        &["eval", "--scores", path_str(&scores), "--methods", "sr,d_alpha", "--roc-mode", "exact", "--out-dir", path_str(dir.path())],
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let v = eval_json(dir.path());
    assert_eq!(method_entry(&v, "sr")["auroc_exact"], method_entry(&v, "d_alpha")["auroc_exact"]);
}

#[test]
fn hist_counts_cover_every_row() {
    let dir = TempDir::new().unwrap();
    let scores = binary_file(dir.path());
    let out = trustcheck(
        &["hist", "--scores", path_str(&scores), "--method", "d_alpha", "--bins", "7", "--out-dir", path_str(dir.path())],
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let mut rdr = csv::Reader::from_path(dir.path().join("hist_d_alpha.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["bin_lo", "bin_hi", "count_e0", "count_e1"]);
    let (mut e0, mut e1, mut bins) = (0u64, 0u64, 0);
    for rec in rdr.records() {
        let rec = rec.unwrap();
        e0 += rec[2].parse::<u64>().unwrap();
        e1 += rec[3].parse::<u64>().unwrap();
        bins += 1;
    }
    let records: Vec<ScoreFileRecord<f64>> = parse_scores(&fs::read(&scores).unwrap(), ScoreFormat::Csv).unwrap();
    let wrong = records.iter().filter(|r| trustcheck_core::scorefile::error_bit(r)).count() as u64;
    assert_eq!(bins, 7);
    assert_eq!(e0 + e1, 200);
    assert_eq!(e1, wrong);
}

#[test]
fn environment_overrides_defaults_and_flags_override_environment() {
    let dir = TempDir::new().unwrap();
    let mut args = vec!["synth", "--methods", "d_alpha", "--out-dir", path_str(dir.path())];
    args.extend(SMALL);
    let out = trustcheck(&args, &[("TRUSTCHECK_SIGMA", "3"), ("TRUSTCHECK_SEED", "7")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = parse_report_json::<f64>(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.config.sigma, 3.0);
    assert_eq!(report.config.base_seed, 7);

    args.extend(["--sigma", "5"]);
    let out = trustcheck(&args, &[("TRUSTCHECK_SIGMA", "3")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = parse_report_json::<f64>(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.config.sigma, 5.0);
}

#[test]
fn emitted_csvs_reparse() {
    let dir = TempDir::new().unwrap();
    let scores = binary_file(dir.path());
    let out = trustcheck(&["eval", "--scores", path_str(&scores), "--out-dir", path_str(dir.path())], &[]);
    assert!(out.status.success(), "{}", stderr(&out));

    let mut rdr = csv::Reader::from_path(dir.path().join("eval.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["method", "metric", "value"]);
    assert!(rdr.records().all(|r| r.unwrap()[2].parse::<f64>().is_ok()));

    let mut rdr = csv::Reader::from_path(dir.path().join("roc_sr.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["split", "mode", "threshold", "frr", "trr"]);
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert!(rec[1] == *"exact" || rec[1] == *"grid");
        for i in 2..5 {
            rec[i].parse::<f64>().unwrap();
        }
    }
}

#[test]
fn eval_is_stable_under_score_file_round_trip() {
    let dir = TempDir::new().unwrap();
    let scores = binary_file(dir.path());
    let records: Vec<ScoreFileRecord<f64>> = parse_scores(&fs::read(&scores).unwrap(), ScoreFormat::Csv).unwrap();
    let again = dir.path().join("again.jsonl");
    fs::write(&again, emit_scores(&records, ScoreFormat::JsonLines).unwrap()).unwrap();

    let first = dir.path().join("first");
    let second = dir.path().join("second");
    for (file, out_dir) in [(&scores, &first), (&again, &second)] {
        let out = trustcheck(&["eval", "--scores", path_str(file), "--out-dir", path_str(out_dir)], &[]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let (a, b) = (eval_json(&first), eval_json(&second));
    for m in a["methods"].as_array().unwrap() {
        let other = method_entry(&b, m["method"].as_str().unwrap());
        for key in ["auroc_exact", "auroc_grid", "frr_at_95_exact"] {
            let (x, y) = (m[key].as_f64().unwrap(), other[key].as_f64().unwrap());
            assert!((x - y).abs() <= 1e-12, "{key}: {x} vs {y}");
        }
    }
}

#[test]
fn missing_scores_file_fails_without_outputs() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = trustcheck(&["eval", "--scores", path_str(&missing), "--out-dir", path_str(dir.path())], &[]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("nope.csv"));
    assert!(!dir.path().join("eval.json").exists());
}
