//! `POST /predict`: raw image bytes in, JSON prediction out.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::sync::atomic::{AtomicU64, Ordering};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::json;
use tokio::net::TcpListener;

use crate::error::AppError;
use crate::predict::Predictor;

pub const MAX_BODY_BYTES: usize = 10 * 1024 * 1024;

struct AppState {
    predictor: Predictor,
    served: AtomicU64,
}

pub fn router(predictor: Predictor) -> Router {
    let state = Arc::new(AppState { predictor, served: AtomicU64::new(0) });
    Router::new().route("/predict", post(predict)).layer(DefaultBodyLimit::max(MAX_BODY_BYTES)).with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    if body.is_empty() {
        return error(StatusCode::BAD_REQUEST, "request body is empty; send the image bytes");
    }
    let worker = state.clone();
    let result =
        tokio::task::spawn_blocking(move || worker.predictor.predict_bytes(&body, Path::new("request body"))).await;
    match result {
        Ok(Ok(resp)) => {
            state.served.fetch_add(1, Ordering::Relaxed);
            Json(resp).into_response()
        }
        Ok(Err(e)) if e.user => error(StatusCode::UNPROCESSABLE_ENTITY, e.message),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.message),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("inference task failed: {e}")),
    }
}

/// Binds `addr`, reports the bound address through `on_bound`, then serves
/// until Ctrl-C.
pub async fn serve(predictor: Predictor, addr: SocketAddr, on_bound: impl FnOnce(SocketAddr)) -> Result<(), AppError> {
    let listener =
        TcpListener::bind(addr).await.map_err(|e| AppError::internal(format!("cannot listen on {addr}: {e}")))?;
    let local = listener.local_addr().map_err(|e| AppError::internal(e.to_string()))?;
    on_bound(local);
    axum::serve(listener, router(predictor))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| AppError::internal(format!("server error: {e}")))
}
