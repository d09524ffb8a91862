//! The local verification service: `POST /v1/verify`, `GET /v1/health`,
//! `GET /v1/stats` and `POST /v1/reload`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use stepguard_core::policy::{KnowledgeBase, LoadOptions};
use stepguard_core::verifier::Verifier;
use stepguard_core::{Mode, RequestDescriptor, VerifyRequest, VerifyResponse};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::error::ServeError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub mode: Mode,
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Source re-read by `POST /v1/reload`.
    pub knowledge: Option<PathBuf>,
    pub load_options: LoadOptions,
    /// Learning mode: where derived policies are written on shutdown.
    pub learned_dir: Option<PathBuf>,
}

#[derive(Clone)]
struct AppState {
    verifier: Arc<Verifier>,
    config: Arc<ServiceConfig>,
}

/// Validates a wire request and turns it into a descriptor.
pub fn describe(req: &VerifyRequest) -> Result<RequestDescriptor, String> {
    if req.method.trim().is_empty() {
        return Err("`method` must not be empty".into());
    }
    if !req.method.trim().bytes().all(|b| b.is_ascii_alphabetic()) {
        return Err(format!("`method` `{}` is not an HTTP method", req.method));
    }
    RequestDescriptor::from_url(&req.method, &req.url, req.action_id.clone())
        .map_err(|e| format!("`url` `{}` is not a URL: {e}", req.url))
}

fn protocol_error(status: StatusCode, message: impl Into<String>) -> Response {
    let body = serde_json::json!({ "error": "protocol-error", "message": message.into() });
    (status, Json(body)).into_response()
}

async fn verify(State(state): State<AppState>, body: Bytes) -> Response {
    let req: VerifyRequest = match serde_json::from_slice(&body) {
        Ok(req) => req,
        Err(e) => return protocol_error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let descriptor = match describe(&req) {
        Ok(d) => d,
        Err(message) => return protocol_error(StatusCode::BAD_REQUEST, message),
    };
    let decision = state.verifier.check(&descriptor, req.step_index);
    Json(VerifyResponse::from(&decision)).into_response()
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        mode: state.verifier.mode(),
    })
}

async fn stats(State(state): State<AppState>) -> Response {
    Json(state.verifier.stats()).into_response()
}

async fn reload(State(state): State<AppState>) -> Response {
    let Some(path) = state.config.knowledge.clone() else {
        return protocol_error(StatusCode::CONFLICT, "service has no knowledge source to reload");
    };
    let options = state.config.load_options;
    match tokio::task::spawn_blocking(move || KnowledgeBase::load_path(&path, options)).await {
        Ok(Ok(kb)) => {
            let policies = kb.len();
            state.verifier.set_knowledge(kb);
            Json(serde_json::json!({ "policies": policies })).into_response()
        }
        Ok(Err(e)) => protocol_error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(e) => protocol_error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn not_found() -> Response {
    protocol_error(StatusCode::NOT_FOUND, "unknown endpoint")
}

pub fn router(verifier: Arc<Verifier>, config: ServiceConfig) -> Router {
    Router::new()
        .route("/v1/verify", post(verify))
        .route("/v1/health", get(health))
        .route("/v1/stats", get(stats))
        .route("/v1/reload", post(reload))
        .fallback(not_found)
        .with_state(AppState {
            verifier,
            config: Arc::new(config),
        })
}

/// A running service. Dropping the handle leaves the service running.
pub struct ServiceHandle {
    addr: SocketAddr,
    verifier: Arc<Verifier>,
    learned_dir: Option<PathBuf>,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn verifier(&self) -> &Arc<Verifier> {
        &self.verifier
    }

    /// Stops accepting, drains in-flight checks and, in Learning mode with a
    /// learned directory configured, writes the derived policies. Returns the
    /// written files.
    pub async fn shutdown(mut self) -> Result<Vec<PathBuf>, ServeError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        (&mut self.task).await.map_err(|e| ServeError::Join(e.to_string()))??;
        flush(&self.verifier, self.learned_dir.clone()).await
    }

    /// Resolves when the service stops on its own.
    pub async fn wait(&mut self) -> Result<(), ServeError> {
        (&mut self.task).await.map_err(|e| ServeError::Join(e.to_string()))??;
        Ok(())
    }
}

async fn flush(verifier: &Arc<Verifier>, dir: Option<PathBuf>) -> Result<Vec<PathBuf>, ServeError> {
    match (verifier.mode(), dir) {
        (Mode::Learning, Some(dir)) => {
            let verifier = verifier.clone();
            let written = tokio::task::spawn_blocking(move || {
                std::fs::create_dir_all(&dir).map_err(|source| stepguard_core::PolicyError::Io {
                    path: dir.clone(),
                    source,
                })?;
                verifier.flush_learned(&dir)
            })
            .await
            .map_err(|e| ServeError::Join(e.to_string()))??;
            Ok(written)
        }
        _ => Ok(Vec::new()),
    }
}

pub async fn serve(addr: SocketAddr, verifier: Arc<Verifier>, config: ServiceConfig) -> Result<ServiceHandle, ServeError> {
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    let addr = listener.local_addr()?;
    let learned_dir = config.learned_dir.clone();
    let app = router(verifier.clone(), config);
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    tracing::info!(%addr, mode = %verifier.mode(), "verifier service listening");
    Ok(ServiceHandle {
        addr,
        verifier,
        learned_dir,
        shutdown: Some(tx),
        task,
    })
}
