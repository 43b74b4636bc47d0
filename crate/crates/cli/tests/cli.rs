#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn kgrex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgrex"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = kgrex(args);
    assert!(
        out.status.success(),
        "kgrex {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fixture(name: &str, file: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .join(file)
        .display()
        .to_string()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn run_all(name: &str, template: &str, out: &Path) {
    ok(&[
        "--template",
        template,
        "run-all",
        "--corpus",
        &fixture(name, "corpus.jsonl"),
        "--el",
        &fixture(name, "el.jsonl"),
        "--snapshot",
        &fixture(name, "snapshot.jsonl"),
        "--schema",
        &fixture(name, "schema.json"),
        "--out",
        &s(out),
    ]);
}

#[test]
fn run_all_with_oracle_stub_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    run_all("webnlg_mini", "t2", dir.path());
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["f1"], 1.0);
    assert_eq!(report["examples"], 60);
    for stage in [
        "corpus",
        "grounded",
        "inputs",
        "train_inputs",
        "generated",
        "predictions",
    ] {
        assert!(
            dir.path()
                .join(format!("{stage}.jsonl.manifest.json"))
                .exists(),
            "{stage}"
        );
    }
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_all("nyt_mini", "t2", a.path());
    run_all("nyt_mini", "t2", b.path());
    for f in [
        "corpus.jsonl",
        "grounded.jsonl",
        "inputs.jsonl",
        "train_inputs.jsonl",
        "generated.jsonl",
        "predictions.jsonl",
        "report.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
        let (ma, mb) = (
            json(&a.path().join(format!("{f}.manifest.json"))),
            json(&b.path().join(format!("{f}.manifest.json"))),
        );
        assert_eq!(ma["outputs"][0]["sha256"], mb["outputs"][0]["sha256"]);
        assert_eq!(ma["config"], mb["config"]);
    }
}

#[test]
fn stages_restart_from_files() {
    let all = tempfile::tempdir().unwrap();
    run_all("tacred_mini", "t1", all.path());
    let d = tempfile::tempdir().unwrap();
    let p = |f: &str| s(&d.path().join(f));
    let schema = fixture("tacred_mini", "schema.json");
    ok(&[
        "ingest",
        "--input",
        &fixture("tacred_mini", "corpus.jsonl"),
        "--schema",
        &schema,
        "--out",
        &p("corpus.jsonl"),
    ]);
    ok(&[
        "ground",
        "--corpus",
        &p("corpus.jsonl"),
        "--el",
        &fixture("tacred_mini", "el.jsonl"),
        "--snapshot",
        &fixture("tacred_mini", "snapshot.jsonl"),
        "--out",
        &p("grounded.jsonl"),
    ]);
    ok(&[
        "template",
        "--corpus",
        &p("corpus.jsonl"),
        "--grounded",
        &p("grounded.jsonl"),
        "--out",
        &p("inputs.jsonl"),
    ]);
    ok(&[
        "generate",
        "--inputs",
        &p("inputs.jsonl"),
        "--out",
        &p("generated.jsonl"),
    ]);
    ok(&[
        "postprocess",
        "--corpus",
        &p("corpus.jsonl"),
        "--generated",
        &p("generated.jsonl"),
        "--schema",
        &schema,
        "--out",
        &p("predictions.jsonl"),
    ]);
    ok(&[
        "evaluate",
        "--corpus",
        &p("corpus.jsonl"),
        "--predictions",
        &p("predictions.jsonl"),
        "--grounded",
        &p("grounded.jsonl"),
        "--out",
        &p("report.json"),
    ]);
    for f in [
        "grounded.jsonl",
        "inputs.jsonl",
        "generated.jsonl",
        "predictions.jsonl",
        "report.json",
    ] {
        assert_eq!(
            fs::read(d.path().join(f)).unwrap(),
            fs::read(all.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn evaluate_names_missing_ids() {
    let dir = tempfile::tempdir().unwrap();
    run_all("webnlg_mini", "t2", dir.path());
    let preds = fs::read_to_string(dir.path().join("predictions.jsonl")).unwrap();
    let kept: Vec<&str> = preds
        .lines()
        .filter(|l| !l.contains("\"webnlg-007\"") && !l.contains("\"webnlg-042\""))
        .collect();
    let cut = dir.path().join("cut.jsonl");
    fs::write(&cut, kept.join("\n") + "\n").unwrap();
    let out = kgrex(&[
        "evaluate",
        "--corpus",
        &s(&dir.path().join("corpus.jsonl")),
        "--predictions",
        &s(&cut),
        "--out",
        &s(&dir.path().join("r2.json")),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(
        err.contains("webnlg-007") && err.contains("webnlg-042"),
        "{err}"
    );
    assert!(!dir.path().join("r2.json").exists());
}

/// Found-info ratio recomputed straight from the fixture files: kept links
/// (score >= -4.5, best candidate per span, typed in the snapshot) over the
/// distinct triple arguments.
fn hand_ratio(name: &str) -> f64 {
    let typed: HashSet<String> = fs::read_to_string(fixture(name, "snapshot.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|v| !v["instance_of"].as_array().unwrap().is_empty())
        .map(|v| v["kb_id"].as_str().unwrap().to_string())
        .collect();
    let mut facts = 0;
    for line in fs::read_to_string(fixture(name, "el.jsonl"))
        .unwrap()
        .lines()
    {
        let v: Value = serde_json::from_str(line).unwrap();
        let mut best: BTreeMap<(u64, u64), (f64, String)> = BTreeMap::new();
        for m in v["mentions"].as_array().unwrap() {
            let score = m["score"].as_f64().unwrap();
            if score < -4.5 {
                continue;
            }
            let key = (m["start"].as_u64().unwrap(), m["end"].as_u64().unwrap());
            let id = m["kb_id"].as_str().unwrap().to_string();
            if best.get(&key).is_none_or(|(s, _)| score > *s) {
                best.insert(key, (score, id));
            }
        }
        facts += best.values().filter(|(_, id)| typed.contains(id)).count();
    }
    let mut entities = 0;
    for line in fs::read_to_string(fixture(name, "corpus.jsonl"))
        .unwrap()
        .lines()
    {
        let v: Value = serde_json::from_str(line).unwrap();
        let args: HashSet<&str> = v["triples"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|t| {
                [
                    t["subject"].as_str().unwrap(),
                    t["object"].as_str().unwrap(),
                ]
            })
            .collect();
        entities += args.len();
    }
    facts as f64 / entities as f64
}

#[test]
fn stats_found_ratio_matches_hand_count() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("grounded.jsonl");
    ok(&[
        "ground",
        "--corpus",
        &fixture("nyt_mini", "corpus.jsonl"),
        "--el",
        &fixture("nyt_mini", "el.jsonl"),
        "--snapshot",
        &fixture("nyt_mini", "snapshot.jsonl"),
        "--out",
        &s(&g),
    ]);
    let stats: Value = serde_json::from_str(&ok(&[
        "stats",
        "--corpus",
        &fixture("nyt_mini", "corpus.jsonl"),
        "--schema",
        &fixture("nyt_mini", "schema.json"),
        "--grounded",
        &s(&g),
    ]))
    .unwrap();
    let ratio = stats["found_info_ratio"].as_f64().unwrap();
    assert_eq!(ratio, hand_ratio("nyt_mini"));
    assert!(ratio > 1.0);
    assert_eq!(
        stats["validation"]["violations"].as_array().unwrap().len(),
        0
    );
}

#[test]
fn malformed_input_fails_with_one_line_and_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\":\"a\",\"text\":\"abc\",\"task\":\"RC\"}\n{\"id\":\"b\",\"text\":\"abc\",\"entities\":[{\"surface\":\"abc\",\"start\":3,\"end\":0}],\"task\":\"RC\"}\n").unwrap();
    let out_path = dir.path().join("corpus.jsonl");
    let out = kgrex(&["ingest", "--input", &s(&bad), "--out", &s(&out_path)]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(
        err.contains("line 2") && err.contains("entities[0].end"),
        "{err}"
    );
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn invalid_config_combinations_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = kgrex(&[
        "--template",
        "t1",
        "--ablation",
        "no_text",
        "template",
        "--corpus",
        &fixture("tacred_mini", "corpus.jsonl"),
        "--out",
        &s(&dir.path().join("x.jsonl")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_text"));
    let out = kgrex(&[
        "--template",
        "t1",
        "template",
        "--corpus",
        &fixture("webnlg_mini", "corpus.jsonl"),
        "--out",
        &s(&dir.path().join("x.jsonl")),
    ]);
    assert!(!out.status.success());
    assert!(!dir.path().join("x.jsonl").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"sim":{"epsilon":0.6},"seed":5,"template":{"kind":"t2"}}"#,
    )
    .unwrap();
    run_all_cfg(&cfg, &["--epsilon", "0.9"], dir.path());
    let m = json(&dir.path().join("out/predictions.jsonl.manifest.json"));
    assert_eq!(m["config"]["sim"]["epsilon"], 0.9);
    let aug = json(&dir.path().join("out/train_inputs.jsonl.manifest.json"));
    assert_eq!(aug["config"]["seed"], 5);
}

fn run_all_cfg(cfg: &Path, extra: &[&str], dir: &Path) {
    let mut args = vec!["--config".to_string(), s(cfg)];
    args.extend(extra.iter().map(|a| a.to_string()));
    args.extend(
        [
            "run-all",
            "--corpus",
            &fixture("webnlg_mini", "corpus.jsonl"),
            "--schema",
            &fixture("webnlg_mini", "schema.json"),
            "--out",
            &s(&dir.join("out")),
        ]
        .map(String::from),
    );
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&refs);
}

#[test]
fn remote_backend_over_http() {
    let dir = tempfile::tempdir().unwrap();
    run_all("webnlg_mini", "t2", dir.path());
    let table: BTreeMap<String, String> = fs::read_to_string(dir.path().join("inputs.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .map(|v| {
            (
                v["input"].as_str().unwrap().to_string(),
                v["target"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    let server = common::MockServer::start(move |r, _| {
        let v: Value = serde_json::from_str(&r.body).unwrap();
        let outs: Vec<&str> = v["inputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|i| table[i.as_str().unwrap()].as_str())
            .collect();
        (200, serde_json::json!({ "outputs": outs }).to_string())
    });
    let gen = dir.path().join("remote.jsonl");
    ok(&[
        "--backend",
        "remote",
        "--endpoint",
        &server.url,
        "--greedy",
        "generate",
        "--inputs",
        &s(&dir.path().join("inputs.jsonl")),
        "--out",
        &s(&gen),
    ]);
    assert_eq!(
        fs::read(&gen).unwrap(),
        fs::read(dir.path().join("generated.jsonl")).unwrap()
    );
    assert_eq!(server.hits(), 2); // 60 inputs, batches of 32
    let first: Value = serde_json::from_str(&server.requests()[0].body).unwrap();
    assert_eq!(first["decoding"]["strategy"], "greedy");
}

#[test]
fn combine_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    fs::write(&a, r#"{"precision":0.5,"recall":0.5,"f1":0.5,"examples":1,"confusion":{"correct":1,"spurious":1,"missed":1},"per_triple_size":{}}"#).unwrap();
    fs::write(&b, r#"{"precision":1.0,"recall":1.0,"f1":1.0,"examples":1,"confusion":{"correct":1,"spurious":0,"missed":0},"per_triple_size":{}}"#).unwrap();
    let c: Value = serde_json::from_str(&ok(&["combine", &s(&a), &s(&b)])).unwrap();
    assert_eq!(c["runs"], 2);
    assert_eq!(c["f1"]["mean"], 0.75);
}
