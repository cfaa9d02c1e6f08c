use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use harvest_core::embedding::{EmbeddingProviderConfig, HashedTrigramEmbedder};
use harvest_core::eval::load_question_bank;
use harvest_core::{Embedder, RetryPolicy};
use harvest_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn mini_config() -> ServiceConfig {
    ServiceConfig {
        corpus_path: Some(data_dir().join("mini-corpus")),
        questions_path: Some(data_dir().join("questions.jsonl")),
        ..ServiceConfig::default()
    }
}

fn app(config: ServiceConfig) -> Router {
    router(Arc::new(AppState::new(config).unwrap()))
}

async fn send(app: &Router, method: Method, path: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut request = Request::builder().method(method).uri(path);
    let body = match body {
        Some(v) => {
            request = request.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let response = app.clone().oneshot(request.body(body).unwrap()).await.unwrap();
    let status = response.status();
    let bytes = axum::body::to_bytes(response.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn get(app: &Router, path: &str) -> (StatusCode, Value) {
    send(app, Method::GET, path, None).await
}

async fn post_json(app: &Router, path: &str, body: Value) -> (StatusCode, Value) {
    send(app, Method::POST, path, Some(body)).await
}

fn assert_error(body: &Value, code: &str) {
    assert_eq!(body["code"], code, "{body}");
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()), "{body}");
    for key in body.as_object().unwrap().keys() {
        assert!(["code", "message", "stage"].contains(&key.as_str()), "unexpected key {key}");
    }
}

fn without_latency(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("latency_ms");
    v
}

#[tokio::test]
async fn fresh_start_serves_health_without_index() {
    let app = app(mini_config());
    let (status, health) = get(&app, "/v1/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(health["status"], "ok");
    assert_eq!(health["index_loaded"], false);
    let providers = health["providers"].as_array().unwrap();
    assert_eq!(providers.len(), 2);
    assert!(providers.iter().all(|p| p["reachable"] == true));

    let (status, body) = post_json(&app, "/v1/chat", json!({"query": "What is loam?"})).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_error(&body, "index_not_loaded");

    let (status, body) = get(&app, "/v1/eval/report").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&body, "no_report");

    let (status, body) = get(&app, "/v1/nothing-here").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&body, "not_found");
}

#[tokio::test]
async fn ingest_then_chat_cites_the_known_chunk() {
    let app = app(mini_config());
    let (status, body) = post_json(&app, "/v1/ingest", json!({})).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["doc_count"], 10);
    assert!(body["chunk_count"].as_u64().unwrap() >= 10);
    assert_eq!(body["index_kind"], "flat");

    let (_, health) = get(&app, "/v1/health").await;
    assert_eq!(health["index_loaded"], true);
    assert_eq!(health["chunk_count"], body["chunk_count"]);

    let (status, stats) = get(&app, "/v1/corpus/stats").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stats["doc_count"], 10);
    assert_eq!(stats["chunk_count"], body["chunk_count"]);

    let bank = load_question_bank(&data_dir().join("questions.jsonl")).unwrap();
    for q in bank.iter().step_by(7) {
        let (status, answer) = post_json(&app, "/v1/chat", json!({"query": q.question})).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(answer["used_fallback"], false);
        let cited = answer["citations"][0]["chunk_id"].as_str().unwrap();
        assert!(q.relevant_chunk_ids.contains(cited), "{} cited {cited}", q.id);
        for key in ["chunk_id", "doc_title", "section_path", "score"] {
            assert!(answer["citations"][0].get(key).is_some());
        }
    }
}

#[tokio::test]
async fn chat_validation_and_fallback() {
    let app = app(ServiceConfig {
        body_limit_bytes: 16 * 1024,
        ..mini_config()
    });
    post_json(&app, "/v1/ingest", json!({})).await;

    let (status, body) = post_json(&app, "/v1/chat", json!({"query": ""})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "empty_query");

    let (status, body) = post_json(&app, "/v1/chat", json!({"query": "   "})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "empty_query");

    let (status, body) = post_json(&app, "/v1/chat", json!({"query": "soil ".repeat(2000)})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "query_too_long");

    let (status, body) = post_json(&app, "/v1/chat", json!({"query": "x".repeat(20_000)})).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_error(&body, "body_too_large");

    let (status, body) = post_json(&app, "/v1/chat", json!({"question": "wrong field"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "invalid_json");

    let (status, body) = post_json(&app, "/v1/chat", json!({"query": "loam", "top_k": 0})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "invalid_params");

    let (status, body) = post_json(&app, "/v1/chat", json!({"query": "How does lime correct soil acidity?", "threshold": 1.1})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["used_fallback"], true);
    assert_eq!(body["citations"], json!([]));

    let request = json!({"query": "What does a yield monitor measure?", "top_k": 3});
    let (_, first) = post_json(&app, "/v1/chat", request.clone()).await;
    let (_, second) = post_json(&app, "/v1/chat", request).await;
    assert!(first["citations"].as_array().unwrap().len() <= 3);
    assert_eq!(without_latency(first), without_latency(second));
}

#[tokio::test]
async fn inline_documents_and_their_stats() {
    let app = app(ServiceConfig {
        key_terms: vec!["soil".into()],
        ..ServiceConfig::default()
    });
    let doc = json!({
        "id": "tiny",
        "title": "Tiny",
        "topic": "Agriculture Business",
        "source_kind": "web",
        "text": "soil holds water well",
    });
    let (status, body) = post_json(&app, "/v1/ingest", json!({"documents": [doc]})).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["doc_count"], 1);
    assert_eq!(body["chunk_count"], 1);
    let (_, stats) = get(&app, "/v1/corpus/stats").await;
    assert_eq!(stats["word_count"], 4);
    assert_eq!(stats["key_term_frequency"]["soil"], 1);

    let (status, body) = post_json(&app, "/v1/ingest", json!({"documents": [doc, doc]})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "malformed_corpus");

    let (status, body) = post_json(&app, "/v1/ingest", json!({"corpus_path": "/definitely/not/here"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "malformed_corpus");

    let (status, body) = post_json(&app, "/v1/ingest", json!({})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "no_corpus");

    let empty = json!({"id": "e", "title": "E", "topic": "Agriculture Business", "source_kind": "web", "text": ""});
    let (status, body) = post_json(&app, "/v1/ingest", json!({"documents": [empty]})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "malformed_corpus");

    // failed ingests leave the previous index in place
    let (_, stats) = get(&app, "/v1/corpus/stats").await;
    assert_eq!(stats["doc_count"], 1);
}

#[tokio::test]
async fn eval_run_stores_the_report() {
    let app = app(mini_config());
    post_json(&app, "/v1/ingest", json!({})).await;
    let (status, report) = post_json(&app, "/v1/eval/run", json!({"criterion": "exact_match"})).await;
    assert_eq!(status, StatusCode::OK, "{report}");
    assert_eq!(report["averages"][0]["accuracy_pct"], 100.0);
    assert_eq!(report["configurations"][0]["config_label"], "mock-extractive (RAG)");
    assert_eq!(report["topics"].as_array().unwrap().len(), 5);
    let (status, stored) = get(&app, "/v1/eval/report").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stored, report);

    let (status, body) = post_json(&app, "/v1/eval/run", json!({"questions_path": "/missing.jsonl"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "malformed_questions");
    let (status, body) = post_json(&app, "/v1/eval/run", json!({"criterion": "vibes"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "invalid_json");
}

#[tokio::test]
async fn cors_allows_only_listed_origins() {
    let app = app(ServiceConfig {
        cors_origins: vec!["http://ui.test".into()],
        ..ServiceConfig::default()
    });
    let preflight = |origin: &'static str| {
        Request::builder()
            .method(Method::OPTIONS)
            .uri("/v1/chat")
            .header(header::ORIGIN, origin)
            .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
            .header(header::ACCESS_CONTROL_REQUEST_HEADERS, "content-type")
            .body(Body::empty())
            .unwrap()
    };
    let allowed = app.clone().oneshot(preflight("http://ui.test")).await.unwrap();
    assert_eq!(allowed.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://ui.test");
    let denied = app.clone().oneshot(preflight("http://evil.test")).await.unwrap();
    assert!(denied.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).is_none());
}

#[tokio::test]
async fn startup_loads_an_existing_index() {
    let dir = tempfile::tempdir().unwrap();
    let index_path = dir.path().join("kb.agrx");
    let writer = app(ServiceConfig {
        index_path: Some(index_path.clone()),
        ..mini_config()
    });
    let (status, _) = post_json(&writer, "/v1/ingest", json!({})).await;
    assert_eq!(status, StatusCode::OK);
    assert!(index_path.exists());

    let reader = app(ServiceConfig {
        index_path: Some(index_path),
        ..ServiceConfig::default()
    });
    let (_, health) = get(&reader, "/v1/health").await;
    assert_eq!(health["index_loaded"], true);
    let (status, answer) = post_json(&reader, "/v1/chat", json!({"query": "What does a yield monitor measure?"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(answer["used_fallback"], false);
    let (status, body) = get(&reader, "/v1/corpus/stats").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&body, "stats_unavailable");
}

#[test]
fn config_referencing_missing_secret_fails_startup() {
    let mut config = ServiceConfig::default();
    let mut remote = EmbeddingProviderConfig::http("remote", "http://127.0.0.1:9/embeddings", "m", 8);
    remote.auth_env = Some("HARVEST_CONTRACT_UNSET_KEY".into());
    config.embedding_providers.push(remote);
    config.embedding_provider = "remote".into();
    assert!(AppState::new(config).is_err());
}

/// Embedding endpoint that stalls on texts containing "slow" and fails on
/// texts containing "fail".
struct MockEmbeddings {
    base: String,
    in_flight_slow: Arc<AtomicUsize>,
}

async fn start_mock_embeddings(stall: Duration) -> MockEmbeddings {
    let in_flight_slow = Arc::new(AtomicUsize::new(0));
    let counter = in_flight_slow.clone();
    let local = HashedTrigramEmbedder::new("remote", 64);
    let handler = move |Json(body): Json<Value>| {
        let counter = counter.clone();
        let local = local.clone();
        async move {
            let inputs: Vec<String> = serde_json::from_value(body["input"].clone()).unwrap();
            if inputs.iter().any(|t| t.contains("fail")) {
                return (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": "boom"})));
            }
            if inputs.iter().any(|t| t.contains("slow")) {
                counter.fetch_add(1, Ordering::SeqCst);
                tokio::time::sleep(stall).await;
                counter.fetch_sub(1, Ordering::SeqCst);
            }
            let refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
            let data: Vec<Value> = local
                .embed_raw(&refs)
                .unwrap()
                .into_iter()
                .enumerate()
                .map(|(i, v)| json!({"index": i, "embedding": v}))
                .collect();
            (StatusCode::OK, Json(json!({"data": data})))
        }
    };
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, Router::new().route("/embeddings", post(handler)))
            .await
            .unwrap()
    });
    MockEmbeddings {
        base: format!("http://{addr}"),
        in_flight_slow,
    }
}

fn remote_config(mock: &MockEmbeddings) -> ServiceConfig {
    let mut remote = EmbeddingProviderConfig::http("remote", format!("{}/embeddings", mock.base), "m", 64);
    remote.retry = RetryPolicy::none();
    ServiceConfig {
        embedding_provider: "remote".into(),
        embedding_providers: vec![remote],
        ..ServiceConfig::default()
    }
}

fn doc(id: &str, text: &str) -> Value {
    json!({"id": id, "title": id, "topic": "Precision Agriculture", "source_kind": "article", "text": text})
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn chat_is_served_during_ingest_and_second_ingest_conflicts() {
    let mock = start_mock_embeddings(Duration::from_millis(1500)).await;
    let app = app(remote_config(&mock));

    let old = doc("old", "Drip lines deliver water to the root zone of orchard trees.");
    let (status, body) = post_json(&app, "/v1/ingest", json!({"documents": [old]})).await;
    assert_eq!(status, StatusCode::OK, "{body}");

    let new_docs = json!({"documents": [
        doc("new", "A slow ingest rebuilds the index with guidance on drip irrigation scheduling."),
        doc("other", "Yield maps are cleaned before zones are drawn."),
    ]});
    let background = {
        let app = app.clone();
        tokio::spawn(async move { post_json(&app, "/v1/ingest", new_docs).await })
    };
    while mock.in_flight_slow.load(Ordering::SeqCst) == 0 {
        tokio::time::sleep(Duration::from_millis(10)).await;
    }

    let (status, body) = post_json(&app, "/v1/ingest", json!({"documents": [doc("third", "Another corpus.")]})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_error(&body, "ingest_in_progress");

    let started = std::time::Instant::now();
    let (status, answer) = post_json(&app, "/v1/chat", json!({"query": "drip water for orchard trees", "threshold": 0.0})).await;
    assert_eq!(status, StatusCode::OK, "{answer}");
    assert_eq!(answer["citations"][0]["chunk_id"], "old#0");
    assert!(started.elapsed() < Duration::from_millis(1000), "chat waited for ingest");
    assert!(mock.in_flight_slow.load(Ordering::SeqCst) > 0, "ingest finished too early to tell");

    let (status, body) = background.await.unwrap();
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["doc_count"], 2);
    let (_, answer) = post_json(&app, "/v1/chat", json!({"query": "drip water for orchard trees", "threshold": 0.0})).await;
    assert_ne!(answer["citations"][0]["chunk_id"], "old#0");
    let (status, _) = post_json(&app, "/v1/ingest", json!({"documents": [doc("third", "Another corpus.")]})).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn provider_failures_and_timeouts() {
    let mock = start_mock_embeddings(Duration::from_millis(2000)).await;
    let app = app(ServiceConfig {
        request_timeout_ms: 300,
        ..remote_config(&mock)
    });
    let (status, _) = post_json(&app, "/v1/ingest", json!({"documents": [doc("a", "Cover crops protect soil.")]})).await;
    assert_eq!(status, StatusCode::OK);

    let (status, body) = post_json(&app, "/v1/chat", json!({"query": "this will fail"})).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_error(&body, "provider_failure");
    assert_eq!(body["stage"], "embed");

    let (status, body) = post_json(&app, "/v1/chat", json!({"query": "a slow question"})).await;
    assert_eq!(status, StatusCode::GATEWAY_TIMEOUT);
    assert_error(&body, "timeout");

    let (status, body) = post_json(&app, "/v1/ingest", json!({"documents": [doc("b", "this ingest will fail")]})).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_error(&body, "provider_failure");
    assert_eq!(body["stage"], "embed");

    let (_, health) = get(&app, "/v1/health").await;
    assert_eq!(health["providers"][0]["id"], "remote");
    assert_eq!(health["providers"][0]["reachable"], true);
}
