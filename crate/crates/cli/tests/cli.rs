use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use decode_core::data::{parse_cohort, serialize_cohort, CohortCells, SynthSpec};
use decode_core::{Answers, Cohort, CovidTest, ModelFile, SurveyRecord};
use serde_json::Value;
use tempfile::TempDir;

fn decode(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decode"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = decode(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn kv<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no `{key}=` line in\n{stdout}"))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn evaluate_reproduces_reference_metric_table() {
    let dir = TempDir::new().unwrap();
    let out = ok(
        dir.path(),
        &[
            "evaluate",
            "--confusion",
            "tp=161,fn=23,tn=124,fp=269",
            "--output",
            "m.json",
        ],
    );
    for line in [
        "Sensitivity  0.875",
        "Specificity  0.316",
        "PPV          0.374",
        "NPV          0.844",
    ] {
        assert!(out.contains(line), "missing `{line}` in\n{out}");
    }
    assert_eq!(kv(&out, "tp"), "161");
    let report = json(&dir.path().join("m.json"));
    assert_eq!(report["confusion"]["fn"], 23);
    assert_eq!(report["tool_version"], decode_core::TOOL_VERSION);
    assert_eq!(report["run_config"]["command"], "evaluate");
}

#[test]
fn synth_is_reproducible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        let out = ok(d.path(), &["synth", "--seed", "7", "--output", "cohort.csv"]);
        assert_eq!(kv(&out, "seed"), "7");
    }
    let read = |d: &TempDir| std::fs::read(d.path().join("cohort.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    ok(b.path(), &["synth", "--seed", "8", "--output", "cohort.csv"]);
    assert_ne!(read(&a), read(&b));

    let c = parse_cohort(&String::from_utf8(read(&a)).unwrap(), true)
        .unwrap()
        .cohort;
    assert_eq!(c.len(), 3114);
    let prov: Value = serde_json::from_str(&c.provenance).unwrap();
    assert_eq!(prov["run_config"]["seed"], 7);
    assert_eq!(prov["tool_version"], decode_core::TOOL_VERSION);
}

fn natural_spec(n: usize, seed: u64) -> SynthSpec {
    let mut s = SynthSpec::reference(seed);
    s.n_total = n;
    s.cells = CohortCells::Natural { healthy: 0, sick: n };
    s.holdout = None;
    s
}

#[test]
fn train_logreg_on_5000_rows_emits_loadable_model() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("spec.json"),
        serde_json::to_string(&natural_spec(5000, 21)).unwrap(),
    )
    .unwrap();
    ok(dir.path(), &["synth", "--spec", "spec.json", "--output", "big.csv"]);

    let t = Instant::now();
    let out = ok(
        dir.path(),
        &[
            "train-logreg",
            "--input",
            "big.csv",
            "--output",
            "lr.json",
            "--seed",
            "4",
        ],
    );
    assert!(t.elapsed() < Duration::from_secs(300));
    assert_eq!(out.lines().next(), Some("seed=4"));
    assert_eq!(kv(&out, "records"), "5000");

    let file = ModelFile::from_json(&std::fs::read_to_string(dir.path().join("lr.json")).unwrap()).unwrap();
    assert_eq!(file.run_config["seed"], 4);
    assert_eq!(file.run_config["weight"], 0.85);
    assert_eq!(file.run_config["repeats"], 100);
    let report = json(&dir.path().join("lr.report.json"));
    assert_eq!(report["training"]["mrcv"]["repeats"], 100);
    assert_eq!(report["run_config"]["command"], "train-logreg");

    // Evaluation is deterministic.
    let eval = [
        "evaluate",
        "--model",
        "lr.json",
        "--input",
        "big.csv",
        "--partition",
        "all",
    ];
    let first = ok(dir.path(), &eval);
    assert_eq!(first, ok(dir.path(), &eval));
    assert_eq!(kv(&first, "weight"), "0.85");
}

#[test]
fn prep_writes_cleaned_cohort_and_both_reports() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["synth", "--seed", "3", "--output", "c.csv"]);
    let out = ok(
        dir.path(),
        &[
            "prep",
            "--input",
            "c.csv",
            "--output",
            "clean.csv",
            "--clusters-patients",
            "2",
        ],
    );
    let report = json(&dir.path().join("clean.prune.json"));
    let text = std::fs::read_to_string(dir.path().join("clean.prune.txt")).unwrap();
    assert!(text.contains("removed features:"));
    let removed = report["removed_records"].as_array().unwrap().len();
    assert_eq!(kv(&out, "removed_records"), removed.to_string());
    let clean = parse_cohort(&std::fs::read_to_string(dir.path().join("clean.csv")).unwrap(), true)
        .unwrap()
        .cohort;
    assert_eq!(clean.len(), report["retained_records"].as_u64().unwrap() as usize);
    assert_eq!(clean.len() + removed, 1941);
    assert!(clean
        .records
        .iter()
        .all(|r| r.symptomatic && r.answers.contact_with_infected.is_some()));
    assert_eq!(report["run_config"]["clusters_features"], 2);
}

#[test]
fn gbdt_training_and_explanation() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["synth", "--seed", "2", "--output", "c.csv"]);
    let out = ok(
        dir.path(),
        &[
            "train-gbdt",
            "--input",
            "c.csv",
            "--output",
            "xgb.json",
            "--seed",
            "9",
            "--draws",
            "5",
            "--cv-repeats",
            "1",
            "--repeats",
            "5",
            "--budget",
            "3",
        ],
    );
    assert_eq!(out.lines().next(), Some("seed=9"));
    let file = ModelFile::from_json(&std::fs::read_to_string(dir.path().join("xgb.json")).unwrap()).unwrap();
    assert_eq!(file.run_config["budget"], 3);
    let history = json(&dir.path().join("xgb.report.json"));
    assert!(!history["training"]["wrapper"]["history"].as_array().unwrap().is_empty());

    let out = ok(
        dir.path(),
        &["explain", "--model", "xgb.json", "--input", "c.csv", "--output", "why"],
    );
    let fidelity: f64 = kv(&out, "fidelity").parse().unwrap();
    assert!((0.0..=1.0).contains(&fidelity));
    let explain = json(&dir.path().join("why/explain.json"));
    assert_eq!(explain["model_type"], "gbdt");
    let rules = json(&dir.path().join("why/rules.json"));
    assert_eq!(
        rules["rules"]["rules"].as_array().unwrap().len(),
        explain["leaves"].as_u64().unwrap() as usize
    );
    let dot = std::fs::read_to_string(dir.path().join("why/surrogate.dot")).unwrap();
    assert!(dot.starts_with("// decode") && dot.contains("digraph"));
}

fn flat_cohort() -> Cohort {
    let answers = Answers {
        days_of_symptoms: Some(3),
        cough: Some(true),
        ..Default::default()
    };
    let records = (0..6)
        .map(|i| SurveyRecord {
            answers: answers.clone(),
            symptomatic: true,
            covid_test: if i % 2 == 0 {
                CovidTest::Positive
            } else {
                CovidTest::Negative
            },
            holdout_flag: false,
        })
        .collect();
    Cohort::new(records, "flat")
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let code = |args: &[&str]| decode(dir.path(), args).status.code().unwrap();
    assert_eq!(code(&["no-such-command"]), 2);
    assert_eq!(
        code(&["evaluate", "--confusion", "tp=1,fp=1,tn=1,fn=1", "--weight", "1.5"]),
        2
    );
    assert_eq!(code(&["prep", "--input", "missing.csv", "--output", "x.csv"]), 2);
    assert_eq!(
        code(&[
            "train-logreg",
            "--input",
            "missing.csv",
            "--output",
            "m.json",
            "--weight",
            "-0.1"
        ]),
        2
    );

    std::fs::write(dir.path().join("bad.csv"), "a,b,c\n1,2,3\n").unwrap();
    assert_eq!(code(&["train-logreg", "--input", "bad.csv", "--output", "m.json"]), 3);
    std::fs::write(dir.path().join("model.json"), "{\"format_version\": 99}").unwrap();
    std::fs::write(dir.path().join("flat.csv"), serialize_cohort(&flat_cohort())).unwrap();
    assert_eq!(code(&["evaluate", "--model", "model.json", "--input", "flat.csv"]), 3);

    // No feature separates the classes: selection has nothing to work with.
    let out = decode(
        dir.path(),
        &["train-logreg", "--input", "flat.csv", "--output", "m.json"],
    );
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("training error"));
}

#[test]
fn serve_answers_health_checks() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["synth", "--seed", "1", "--output", "c.csv"]);
    ok(
        dir.path(),
        &[
            "train-logreg",
            "--input",
            "c.csv",
            "--output",
            "lr.json",
            "--repeats",
            "10",
        ],
    );
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let listen = format!("127.0.0.1:{port}");
    let mut child = Command::new(env!("CARGO_BIN_EXE_decode"))
        .args([
            "serve",
            "--model",
            "lr.json",
            "--listen",
            &listen,
            "--data-dir",
            "cases",
        ])
        .current_dir(dir.path())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let response = loop {
        if let Ok(mut s) = TcpStream::connect(&listen) {
            s.write_all(b"GET /api/v1/health HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
                .unwrap();
            let mut buf = String::new();
            s.read_to_string(&mut buf).unwrap();
            break buf;
        }
        assert!(Instant::now() < deadline, "service did not start");
        std::thread::sleep(Duration::from_millis(50));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"model_id\":\"logistic-"));
}
