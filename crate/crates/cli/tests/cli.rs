use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn harvest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harvest")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn ingest(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let corpus = data("mini-corpus");
    let mut args = vec!["ingest", "--corpus", corpus.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let result = harvest(&args);
    assert_eq!(code(&result), 0, "{}", String::from_utf8_lossy(&result.stderr));
    out
}

#[test]
fn ingest_writes_an_agrx_index() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kb.agrx");
    let corpus = data("mini-corpus");
    let out = harvest(&["ingest", "--corpus", corpus.to_str().unwrap(), "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let summary = stdout_json(&out);
    assert_eq!(summary["doc_count"], 10);
    assert_eq!(summary["index_kind"], "flat");
    assert_eq!(&std::fs::read(&path).unwrap()[..4], b"AGRX");
    assert!(String::from_utf8_lossy(&out.stderr).contains("indexed 10 documents"));
}

#[test]
fn ivf_builds_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let flags = ["--ivf", "--nlist", "4", "--seed", "7"];
    let a = ingest(dir.path(), "a.agrx", &flags);
    let b = ingest(dir.path(), "b.agrx", &flags);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let sidecar = |p: &Path| std::fs::read(format!("{}.chunks.jsonl", p.display())).unwrap();
    assert_eq!(sidecar(&a), sidecar(&b));
}

#[test]
fn usage_errors_exit_1() {
    let corpus = data("mini-corpus");
    let corpus = corpus.to_str().unwrap();
    let overlap = harvest(&["ingest", "--corpus", corpus, "--out", "/tmp/x", "--chunk-size", "100", "--overlap", "100"]);
    assert_eq!(code(&overlap), 1);
    assert!(overlap.stdout.is_empty());
    assert_eq!(code(&harvest(&["frobnicate"])), 1);
    assert_eq!(code(&harvest(&["query", "--index", "x"])), 1);
    assert_eq!(code(&harvest(&["ingest", "--corpus", corpus, "--out", "/tmp/x", "--nlist", "3"])), 1);
}

#[test]
fn every_subcommand_has_help() {
    assert_eq!(code(&harvest(&["--help"])), 0);
    for sub in ["ingest", "query", "eval", "stats", "synth-bank", "serve"] {
        let out = harvest(&[sub, "--help"]);
        assert_eq!(code(&out), 0, "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
}

#[test]
fn query_answers_falls_back_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let index = ingest(dir.path(), "kb.agrx", &[]);
    let index = index.to_str().unwrap();
    let bank = harvest_core::eval::load_question_bank(&data("questions.jsonl")).unwrap();
    let q = &bank[0];

    let run = |extra: &[&str]| {
        let mut args = vec!["query", "--index", index, "--q", &q.question];
        args.extend_from_slice(extra);
        let out = harvest(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let mut answer = stdout_json(&out);
        answer["latency_ms"] = 0.into();
        answer
    };
    let answer = run(&[]);
    assert_eq!(answer["used_fallback"], false);
    assert_eq!(answer["text"], q.reference_answers[0]);
    let cited = answer["citations"][0]["chunk_id"].as_str().unwrap();
    assert!(q.relevant_chunk_ids.contains(cited));
    assert_eq!(run(&[]), answer);

    let fallback = run(&["--threshold", "1.1"]);
    assert_eq!(fallback["used_fallback"], true);
    assert_eq!(fallback["citations"], Value::Array(vec![]));

    let empty = harvest(&["query", "--index", index, "--q", " "]);
    assert_eq!(code(&empty), 1);
}

#[test]
fn eval_reports_and_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let index = ingest(dir.path(), "kb.agrx", &[]);
    let index = index.to_str().unwrap();
    let questions = data("questions.jsonl");
    let questions = questions.to_str().unwrap();
    let tables = dir.path().join("tables.txt");
    let report_path = dir.path().join("report.json");

    let out = harvest(&[
        "eval", "--index", index, "--questions", questions, "--criterion", "exact_match",
        "--out", report_path.to_str().unwrap(), "--tables", tables.to_str().unwrap(),
        "--min-recall", "0.9", "--min-accuracy", "100",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["averages"][0]["accuracy_pct"], 100.0);
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(saved["topics"], report["topics"]);
    let text = std::fs::read_to_string(&tables).unwrap();
    assert!(text.contains("Model | MRR | Recall@10 | BLEU\n"));
    assert!(text.contains("Topic | Acc. (%) | Avg. Time (s)\n"));
    assert!(text.contains("1. Agriculture and life sciences | 100 | "));

    let unmet = harvest(&["eval", "--index", index, "--questions", questions, "--min-recall", "1.1"]);
    assert_eq!(code(&unmet), 4);
    assert!(String::from_utf8_lossy(&unmet.stderr).contains("Recall@10"));

    let missing = harvest(&["eval", "--index", index, "--questions", "/no/such/questions.jsonl"]);
    assert_eq!(code(&missing), 2);

    let bad_criterion = harvest(&["eval", "--index", index, "--questions", questions, "--criterion", "vibes"]);
    assert_eq!(code(&bad_criterion), 1);

    let no_index = harvest(&["eval", "--index", "/no/such.agrx", "--questions", questions]);
    assert_eq!(code(&no_index), 2);
}

#[test]
fn stats_prints_corpus_statistics() {
    let corpus = data("mini-corpus");
    let out = harvest(&["stats", "--corpus", corpus.to_str().unwrap(), "--key-term", "soil"]);
    assert_eq!(code(&out), 0);
    let stats = stdout_json(&out);
    assert_eq!(stats["doc_count"], 10);
    assert!(stats["word_count"].as_u64().unwrap() > 0);
    assert!(stats["key_term_frequency"]["soil"].as_u64().unwrap() > 0);

    let dir = tempfile::tempdir().unwrap();
    let jsonl = dir.path().join("docs.jsonl");
    std::fs::write(
        &jsonl,
        r#"{"id":"d","title":"D","topic":"agriculture-business","source_kind":"web","text":"one two three four"}"#,
    )
    .unwrap();
    let out = harvest(&["stats", "--corpus", jsonl.to_str().unwrap()]);
    assert_eq!(stdout_json(&out)["word_count"], 4);

    std::fs::write(&jsonl, "{not json").unwrap();
    assert_eq!(code(&harvest(&["stats", "--corpus", jsonl.to_str().unwrap()])), 2);
}

#[test]
fn synth_bank_reproduces_the_bundled_bank() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("questions.jsonl");
    let corpus = data("mini-corpus");
    let result = harvest(&["synth-bank", "--corpus", corpus.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&result), 0);
    assert_eq!(stdout_json(&result)["question_count"], 100);
    assert_eq!(std::fs::read_to_string(out).unwrap(), std::fs::read_to_string(data("questions.jsonl")).unwrap());
}

#[test]
fn unreachable_provider_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let port = {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.local_addr().unwrap().port()
    };
    let config = dir.path().join("harvest.toml");
    std::fs::write(
        &config,
        format!(
            r#"
embedding_provider = "remote"

[[embedding_providers]]
provider_id = "remote"
endpoint = "http://127.0.0.1:{port}/embeddings"
dim = 16
timeout_ms = 500
retry = {{ max_retries = 0, base_delay = 0 }}
"#
        ),
    )
    .unwrap();
    let corpus = data("mini-corpus");
    let out = harvest(&[
        "ingest", "--corpus", corpus.to_str().unwrap(), "--out", dir.path().join("kb").to_str().unwrap(),
        "--config", config.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));

    let missing_secret = dir.path().join("secret.toml");
    std::fs::write(
        &missing_secret,
        r#"
embedding_provider = "remote"

[[embedding_providers]]
provider_id = "remote"
endpoint = "http://127.0.0.1:9/embeddings"
dim = 16
auth_env = "HARVEST_CLI_TEST_UNSET_KEY"
"#,
    )
    .unwrap();
    let out = harvest(&[
        "ingest", "--corpus", corpus.to_str().unwrap(), "--out", dir.path().join("kb").to_str().unwrap(),
        "--config", missing_secret.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);

    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "bind = [").unwrap();
    let out = harvest(&["serve", "--config", broken.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut response = String::new();
    stream.read_to_string(&mut response).ok()?;
    Some(response)
}

#[test]
fn serve_answers_health_checks() {
    let dir = tempfile::tempdir().unwrap();
    let index = ingest(dir.path(), "kb.agrx", &[]);
    let port = {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.local_addr().unwrap().port()
    };
    let config = dir.path().join("harvest.toml");
    std::fs::write(&config, format!("index_path = {:?}\n", index.to_str().unwrap())).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_harvest"))
        .args(["serve", "--config", config.to_str().unwrap(), "--bind", &format!("127.0.0.1:{port}")])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let response = loop {
        if let Some(r) = http_get(port, "/v1/health") {
            break r;
        }
        assert!(Instant::now() < deadline, "service did not come up");
        std::thread::sleep(Duration::from_millis(50));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains(r#""index_loaded":true"#), "{response}");
}
