//! JSON HTTP API.
//!
//! | route                         | response                         |
//! |-------------------------------|----------------------------------|
//! | `GET /search?q=..&limit=N`    | ranked `SearchResponse`          |
//! | `GET /engines`                | engine roster                    |
//! | `PUT /engines/{id}/weight`    | updated engine, persisted        |
//! | `GET /healthz`                | `{"status":"ok","engines":K}`    |
//!
//! Errors are `{"error": code, "detail": text}` with a 400, 404, 500 or 503
//! status.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, put};
use axum::{Json, Router};
use semantelli_core::pipeline::{EngineInfo, DEFAULT_RESULT_LIMIT};
use semantelli_core::seid::SeidError;
use semantelli_core::{Metasearch, SearchError, SearchOptions};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error: String,
    pub detail: String,
}

impl ApiError {
    pub fn new(status: StatusCode, error: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            status,
            error: error.into(),
            detail: detail.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        let status = if e.is_client_error() {
            StatusCode::BAD_REQUEST
        } else if matches!(e, SearchError::NoEnginesEnabled | SearchError::AllBackendsFailed(_)) {
            StatusCode::SERVICE_UNAVAILABLE
        } else {
            StatusCode::INTERNAL_SERVER_ERROR
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<SeidError> for ApiError {
    fn from(e: SeidError) -> Self {
        let (status, code) = match &e {
            SeidError::UnknownEngine(_) => (StatusCode::NOT_FOUND, "UnknownEngine"),
            SeidError::WeightOutOfRange(_) => (StatusCode::BAD_REQUEST, "WeightOutOfRange"),
            SeidError::NoEnginesEnabled => (StatusCode::SERVICE_UNAVAILABLE, "NoEnginesEnabled"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "PersistenceFailed"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

type AppState = Arc<Metasearch>;

/// Builds the API router. Static files under `ui_dir`, when given, are
/// served at `/ui`.
pub fn router(service: Arc<Metasearch>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/search", get(search))
        .route("/engines", get(engines))
        .route("/engines/{id}/weight", put(set_weight))
        .route("/healthz", get(healthz))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such route") })
        .with_state(service);
    match ui_dir {
        Some(dir) => api.nest_service("/ui", ServeDir::new(dir)),
        None => api,
    }
}

fn parse_flag(v: Option<&String>) -> bool {
    matches!(v.map(String::as_str), Some("1" | "true" | "yes"))
}

async fn search(State(svc): State<AppState>, Query(params): Query<HashMap<String, String>>) -> Result<Response, ApiError> {
    let query = params.get("q").map(String::as_str).unwrap_or("");
    let limit = match params.get("limit") {
        None => DEFAULT_RESULT_LIMIT,
        Some(raw) => raw
            .parse()
            .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "InvalidParameter", format!("limit `{raw}` is not a non-negative integer")))?,
    };
    let options = SearchOptions {
        limit,
        verbose: parse_flag(params.get("verbose")),
    };
    let response = svc.search(query, options).await?;
    Ok(Json(response).into_response())
}

#[derive(Serialize)]
struct EngineList {
    engines: Vec<EngineInfo>,
}

async fn engines(State(svc): State<AppState>) -> Json<EngineList> {
    Json(EngineList { engines: svc.engines() })
}

#[derive(Deserialize)]
struct WeightBody {
    weight: f64,
}

async fn set_weight(
    State(svc): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<WeightBody>, JsonRejection>,
) -> Result<Json<EngineInfo>, ApiError> {
    let Json(body) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidBody", e.body_text()))?;
    svc.set_engine_weight(&id, body.weight)?;
    let engine = svc
        .engines()
        .into_iter()
        .find(|e| e.engine_id == id)
        .ok_or_else(|| ApiError::from(SeidError::UnknownEngine(id)))?;
    Ok(Json(engine))
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    engines: usize,
}

async fn healthz(State(svc): State<AppState>) -> Json<Health> {
    let engines = svc.engines().iter().filter(|e| e.enabled).count();
    Json(Health { status: "ok", engines })
}

/// Serves until ctrl-c.
pub async fn serve(service: Arc<Metasearch>, listen: &str, ui_dir: Option<&Path>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(service, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
