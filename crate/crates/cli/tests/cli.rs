use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const MINUTES: usize = 7 * 1440;

fn actihist(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_actihist"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn wide_row(id: &str, counts: &[u32]) -> String {
    let mut s = format!("{id},2024-03-04T00:00");
    for c in counts {
        s.push(',');
        s.push_str(&c.to_string());
    }
    s
}

/// Worn 08:00-22:00 on the given days, with a 30 minute zero run at noon.
fn active(days: &[usize], level: u32) -> Vec<u32> {
    let mut v = vec![0u32; MINUTES];
    for &d in days {
        for m in 8 * 60..22 * 60 {
            if !(12 * 60..12 * 60 + 30).contains(&m) {
                v[d * 1440 + m] = level + (m as u32 % 13) * 20;
            }
        }
    }
    v
}

fn write_profiles(dir: &Path, rows: &[(&str, Vec<u32>)]) {
    let mut text = String::from("subject_id,start_timestamp");
    for i in 0..MINUTES {
        text.push_str(&format!(",c{i}"));
    }
    text.push('\n');
    for (id, counts) in rows {
        text.push_str(&wide_row(id, counts));
        text.push('\n');
    }
    fs::create_dir_all(dir.join("out")).unwrap();
    fs::write(dir.join("out/profiles.csv"), text).unwrap();
}

fn fixture(dir: &Path) {
    let all: Vec<usize> = (0..7).collect();
    write_profiles(
        dir,
        &[
            ("a", active(&all, 300)),
            ("b", active(&all, 380)),
            ("c", active(&[0, 1, 2, 3, 4], 340)),
            ("never_worn", vec![0; MINUTES]),
            ("two_days", active(&[2, 3], 360)),
        ],
    );
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/cleaning_report.json")).unwrap()).unwrap()
}

fn worn_minutes(r: &Value) -> Vec<u64> {
    r["subjects"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["days"].as_array().unwrap().iter().map(|d| d["worn_minutes"].as_u64().unwrap()).sum())
        .collect()
}

#[test]
fn clean_lists_exclusions_with_reasons() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let out = actihist(tmp.path(), &["clean"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(tmp.path());
    assert_eq!(r["n_profiles"], 5);
    assert_eq!(r["n_valid"], 3);
    let excluded: Vec<&Value> = r["subjects"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["valid"] == false)
        .collect();
    let ids: Vec<&str> = excluded.iter().map(|s| s["subject_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["never_worn", "two_days"]);
    for s in excluded {
        assert!(!s["exclusion_reasons"].as_array().unwrap().is_empty());
    }
    let cleaned = fs::read_to_string(tmp.path().join("out/cleaned_profiles.csv")).unwrap();
    assert_eq!(cleaned.lines().count(), 4);
}

#[test]
fn longer_zero_block_never_loses_wear() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    assert!(actihist(tmp.path(), &["clean", "--zero-block", "10"]).status.success());
    let short = worn_minutes(&report(tmp.path()));
    assert!(actihist(tmp.path(), &["clean", "--zero-block", "60"]).status.success());
    let long = worn_minutes(&report(tmp.path()));
    assert!(short.iter().zip(&long).all(|(s, l)| l >= s));
    assert!(short.iter().zip(&long).any(|(s, l)| l > s));
}

#[test]
fn missing_input_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let out = actihist(tmp.path(), &["clean"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("profiles.csv"));
}

#[test]
fn bad_config_exits_5() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.json"), r#"{"seed": "one"}"#).unwrap();
    assert_eq!(actihist(tmp.path(), &["--config", "run.json", "clean"]).status.code(), Some(5));
    fs::write(tmp.path().join("run.json"), r#"{"inference": {"level": 1.5}}"#).unwrap();
    assert_eq!(actihist(tmp.path(), &["--config", "run.json", "clean"]).status.code(), Some(5));
    fs::write(tmp.path().join("run.json"), r#"{"models": []}"#).unwrap();
    assert_eq!(actihist(tmp.path(), &["--config", "run.json", "clean"]).status.code(), Some(5));
}

#[test]
fn all_invalid_cohort_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    write_profiles(tmp.path(), &[("x", vec![0; MINUTES]), ("y", active(&[1], 400))]);
    let out = actihist(tmp.path(), &["clean"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulated_chain_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("run.json"),
        r#"{
  "simulate": {"n": 100},
  "inference": {
    "draws": 500,
    "scenarios": [
      {"name": "null", "minutes_moved": 0,
       "source": {"kind": "indices", "bins": [0]},
       "target": {"kind": "midpoints", "above": 3600}}
    ]
  },
  "plots": {"band_draws": 200}
}"#,
    )
    .unwrap();
    for cmd in ["simulate", "clean", "summarize", "fit", "compare", "infer"] {
        let out = actihist(dir, &["--config", "run.json", "--seed", "3", cmd]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.join(format!("out/{cmd}.config.json")).exists());
    }
    let out = dir.join("out");

    let base_csvs = fs::read_dir(out.join("fit"))
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("base.") && n.ends_with(".csv"))
        .count();
    assert_eq!(base_csvs, 0);
    assert!(out.join("fit/base.json").exists());
    let hist = fs::read_to_string(out.join("fit/hist.f_hist.csv")).unwrap();
    assert_eq!(hist.lines().count(), 1 + 81);
    assert!(out.join("fit/hist.f_hist.svg").exists());

    let table = fs::read_to_string(out.join("compare/comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 6);

    let mut rdr = csv::Reader::from_path(out.join("infer/intervals.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][0], "null");
    for v in rows[0].iter().skip(2).take(4) {
        assert_eq!(v.parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn covariance_export_is_opt_in() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let models = r#""models": [{"name": "base", "variant": "base", "terms": [{"type": "numeric", "name": "weartime"}]}]"#;
    let fit_json = |export: bool| -> Value {
        fs::write(
            dir.join("run.json"),
            format!(r#"{{"simulate": {{"n": 60}}, "export_covariance": {export}, {models}}}"#),
        )
        .unwrap();
        for cmd in ["simulate", "clean", "summarize", "fit"] {
            let out = actihist(dir, &["--config", "run.json", cmd]);
            assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        }
        serde_json::from_str(&fs::read_to_string(dir.join("out/fit/base.json")).unwrap()).unwrap()
    };
    assert!(fit_json(false).get("v_beta").is_none());
    let v = fit_json(true);
    let rows = v["v_beta"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], rows[1][0]);
}
