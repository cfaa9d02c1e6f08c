//! HTTP front end for a harvest knowledge base.
//!
//! | Method | Path | |
//! |---|---|---|
//! | POST | `/v1/chat` | answer a query with citations |
//! | POST | `/v1/ingest` | rebuild the index from a corpus |
//! | GET | `/v1/health` | liveness, index and provider status |
//! | GET | `/v1/corpus/stats` | statistics of the ingested corpus |
//! | POST | `/v1/eval/run` | run the benchmark on a question bank |
//! | GET | `/v1/eval/report` | last benchmark report |
//!
//! Errors are JSON `{code, message, stage?}`.

pub mod config;
pub mod error;
pub mod routes;
pub mod state;

use std::sync::Arc;
use std::time::Duration;

use axum::extract::{DefaultBodyLimit, Request};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use thiserror::Error;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use config::{ConfigError, ServiceConfig};
pub use error::{ApiError, ErrorBody};
pub use state::{AppState, StartupError};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Startup(#[from] StartupError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("startup task failed: {0}")]
    Join(#[from] tokio::task::JoinError),
}

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    if origins.iter().any(|o| o == "*") {
        return layer.allow_origin(AllowOrigin::any());
    }
    let list: Vec<HeaderValue> = origins
        .iter()
        .filter_map(|o| match HeaderValue::from_str(o) {
            Ok(v) => Some(v),
            Err(_) => {
                tracing::warn!(origin = %o, "ignoring invalid CORS origin");
                None
            }
        })
        .collect();
    layer.allow_origin(AllowOrigin::list(list))
}

async fn time_limit(limit: Duration, request: Request, next: Next) -> Response {
    match tokio::time::timeout(limit, next.run(request)).await {
        Ok(response) => response,
        Err(_) => ApiError::new(
            StatusCode::GATEWAY_TIMEOUT,
            "timeout",
            format!("request exceeded {} ms", limit.as_millis()),
        )
        .into_response(),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = Duration::from_millis(state.config.request_timeout_ms);
    let body_limit = state.config.body_limit_bytes;
    let cors = cors(&state.config.cors_origins);
    Router::new()
        .route("/v1/chat", post(routes::chat))
        .route("/v1/ingest", post(routes::ingest))
        .route("/v1/health", get(routes::health))
        .route("/v1/corpus/stats", get(routes::corpus_stats))
        .route("/v1/eval/run", post(routes::eval_run))
        .route("/v1/eval/report", get(routes::eval_report))
        .fallback(routes::not_found)
        .layer(DefaultBodyLimit::max(body_limit))
        .layer(middleware::from_fn(move |req, next| time_limit(limit, req, next)))
        .layer(cors)
        .with_state(state)
}

/// Loads the configured index and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    let addr = config.bind;
    let state = tokio::task::spawn_blocking(move || AppState::new(config)).await??;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
