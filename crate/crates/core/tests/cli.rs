use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use retrieve_read::synthetic::Fixture;
use serde_json::json;

fn rnr(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rnr")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status.code(), stdout(&o), String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn hand_dataset(with_bad_answer: bool) -> String {
    let first = "Acme was founded by Jane Roe in 1901 .";
    let second = "Acme makes anvils in Springfield .";
    let qa = |id: &str, q: &str, ctx: &str, a: &str| {
        json!({"id": id, "question": q, "answers": [{"text": a, "answer_start": ctx.find(a).unwrap()}]})
    };
    let mut qas = vec![
        qa("q1", "Who founded Acme ?", first, "Jane Roe"),
        qa("q2", "When was Acme founded ?", first, "1901"),
    ];
    if with_bad_answer {
        // Starts in the middle of a word, so it cannot be aligned.
        qas.push(qa("bad", "What ?", first, "oun"));
    }
    json!({
        "version": "1.1",
        "data": [{
            "title": "Acme",
            "paragraphs": [
                {"context": first, "qas": qas},
                {"context": second, "qas": [qa("q3", "Where are anvils made ?", second, "Springfield")]},
            ],
        }],
    })
    .to_string()
}

#[test]
fn ingest_counts_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("squad.json"), hand_dataset(false)).unwrap();
    let args = ["ingest", "--dataset", "squad.json", "--out-dir", "store"];
    let first = ok(rnr(&args, dir.path()));
    assert_eq!(first, "passages 2\nexamples 3\ndropped 0\n");
    let passages = fs::read(dir.path().join("store/passages.jsonl")).unwrap();
    let examples = fs::read(dir.path().join("store/examples.jsonl")).unwrap();
    assert_eq!(ok(rnr(&args, dir.path())), first);
    assert_eq!(fs::read(dir.path().join("store/passages.jsonl")).unwrap(), passages);
    assert_eq!(fs::read(dir.path().join("store/examples.jsonl")).unwrap(), examples);
    assert_eq!(String::from_utf8(examples).unwrap().lines().count(), 3);
}

#[test]
fn ingest_reports_dropped_answers() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("squad.json"), hand_dataset(true)).unwrap();
    let out = ok(rnr(&["ingest", "--dataset", "squad.json", "--out-dir", "store"], dir.path()));
    assert_eq!(out, "passages 2\nexamples 3\ndropped 1\n");
}

#[test]
fn missing_inputs_and_bad_config_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = rnr(&["ingest", "--dataset", "nope.json", "--out-dir", "x"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    fs::write(dir.path().join("run.json"), r#"{"hyper": {"hidden": 4, "hiddn": 5}}"#).unwrap();
    let o = rnr(&["--config", "run.json", "ingest"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hiddn"));
    let o = rnr(&["--chain", "neural:3", "eval-ir"], dir.path());
    assert_ne!(o.status.code(), Some(0));
}

/// Ingests a generated fixture, indexes it and trains two small epochs.
fn trained_workspace() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let fx = Fixture::generate(8, 12, 8, 4);
    fs::write(dir.path().join("squad.json"), fx.to_squad_json()).unwrap();
    let mut vec_file = Vec::new();
    fx.vectors.write(&mut vec_file).unwrap();
    fs::write(dir.path().join("vectors.txt"), vec_file).unwrap();
    let config = json!({
        "paths": {
            "corpus": "store/passages.jsonl",
            "examples": "store/examples.jsonl",
            "vectors": "vectors.txt",
            "index": "corpus.idx",
            "checkpoint_dir": "ckpt",
        },
        "hyper": {"hidden": 4, "context": 4, "epochs": 2, "batch_positives": 6, "batch_negatives": 6},
        "chain": "tfidf:6,neural:3",
    });
    fs::write(dir.path().join("run.json"), config.to_string()).unwrap();
    ok(rnr(&["ingest", "--dataset", "squad.json", "--out-dir", "store"], dir.path()));
    ok(rnr(&["--config", "run.json", "build-index"], dir.path()));
    let train = ok(rnr(&["--config", "run.json", "train"], dir.path()));
    assert_eq!(train.lines().count(), 2, "{train}");
    let ckpt = dir.path().join("ckpt/epoch-002.ckpt");
    assert!(ckpt.is_file());
    (dir, ckpt)
}

#[test]
fn end_to_end_commands() {
    let (dir, ckpt) = trained_workspace();
    let d = dir.path();
    let ck = ckpt.to_str().unwrap();

    let ir = ok(rnr(&["--config", "run.json", "--chain", "tfidf:5", "eval-ir"], d));
    let names: Vec<&str> = ir.lines().map(|l| l.split(' ').next().unwrap()).collect();
    assert_eq!(names, ["S@1", "S@5", "MRR@5"]);

    let ir = ok(rnr(&["--config", "run.json", "--checkpoint", ck, "--report", "ir.json", "eval-ir"], d));
    assert!(ir.starts_with("S@1 "));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("ir.json")).unwrap()).unwrap();
    assert_eq!(report["queries"].as_array().unwrap().len(), 12);

    let rc = ok(rnr(&["--config", "run.json", "--checkpoint", ck, "eval-rc"], d));
    assert!(rc.starts_with("EM ") && rc.contains("\nF1 "), "{rc}");

    let mrs = ok(rnr(&["--config", "run.json", "--checkpoint", ck, "--k", "2", "eval-mrs"], d));
    assert!(mrs.contains("EM ") && mrs.contains("F1 "), "{mrs}");

    let passages = fs::read_to_string(d.join("store/passages.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(passages.lines().next().unwrap()).unwrap();
    let city = first["text"].as_str().unwrap().split(' ').next().unwrap();
    let question = format!("Who is the mayor of {city} ?");
    let ask = ok(rnr(&["--config", "run.json", "--checkpoint", ck, "--k", "1", "ask", &question], d));
    let lines: Vec<&str> = ask.lines().collect();
    assert_eq!(lines.iter().filter(|l| l.starts_with("1. passage")).count(), 1);
    assert!(!ask.contains("2. passage"));
    assert_eq!(lines.iter().filter(|l| l.starts_with("answer: ")).count(), 1);

    // Only words that occur in every passage: nothing scores above zero.
    let ask = ok(rnr(&["--config", "run.json", "--checkpoint", ck, "ask", "is the mayor"], d));
    assert_eq!(ask, "answer: (no passage retrieved)\n");
}

#[test]
fn newer_file_versions_are_refused() {
    let (dir, ckpt) = trained_workspace();
    let d = dir.path();
    let mut bytes = fs::read(&ckpt).unwrap();
    bytes[8] = 9;
    fs::write(d.join("future.ckpt"), &bytes).unwrap();
    let o = rnr(&["--config", "run.json", "--checkpoint", "future.ckpt", "eval-rc"], d);
    assert_eq!(o.status.code(), Some(6));

    let mut idx = fs::read(d.join("corpus.idx")).unwrap();
    idx[8] = 9;
    fs::write(d.join("corpus.idx"), idx).unwrap();
    let o = rnr(&["--config", "run.json", "--chain", "tfidf:5", "eval-ir"], d);
    assert_eq!(o.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&o.stderr).contains("version"));
}
