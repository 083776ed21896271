//! HTTP layer of the annotation service.

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use super::model::{JudgmentSubmission, Registration, TaskSpec};
use super::report::{agreement_report, ReportQuery};
use super::service::{AnnotationService, ServiceError, ServiceResult};

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<RwLock<AnnotationService>>,
    /// Shared bearer token; open access when unset.
    pub token: Option<Arc<str>>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let mut body = json!({"error": self.kind(), "message": self.to_string()});
        if let ServiceError::Incomplete(missing) = &self {
            body["missing"] = json!(missing);
        }
        (status, Json(body)).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> ServiceResult<T> {
    serde_json::from_slice(body).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => ServiceError::Invalid(e.to_string()),
        _ => ServiceError::BadRequest(e.to_string()),
    })
}

/// Runs `f` with the write lock on the blocking pool, since writes fsync.
async fn write<T, F>(st: &AppState, f: F) -> ServiceResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut AnnotationService) -> ServiceResult<T> + Send + 'static,
{
    let svc = st.service.clone();
    tokio::task::spawn_blocking(move || {
        let mut guard = svc
            .write()
            .map_err(|_| ServiceError::Storage("service lock poisoned".into()))?;
        f(&mut guard)
    })
    .await
    .map_err(|e| ServiceError::Storage(e.to_string()))?
}

fn read<T>(st: &AppState, f: impl FnOnce(&AnnotationService) -> ServiceResult<T>) -> ServiceResult<T> {
    let guard = st
        .service
        .read()
        .map_err(|_| ServiceError::Storage("service lock poisoned".into()))?;
    f(&guard)
}

fn tokens_equal(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

async fn auth(State(st): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &st.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if !presented.is_some_and(|p| tokens_equal(p.as_bytes(), token.as_bytes())) {
            return ServiceError::Unauthorized("missing or wrong bearer token".into()).into_response();
        }
    }
    next.run(req).await
}

async fn register(State(st): State<AppState>, body: Bytes) -> ServiceResult<Response> {
    let reg: Registration = if body.iter().all(u8::is_ascii_whitespace) {
        Registration::default()
    } else {
        parse(&body)?
    };
    let id = write(&st, move |s| s.register(reg)).await?;
    Ok((StatusCode::CREATED, Json(json!({"annotator_id": id}))).into_response())
}

async fn create_tasks(State(st): State<AppState>, body: Bytes) -> ServiceResult<Response> {
    let value: serde_json::Value = parse(&body)?;
    let specs: Vec<TaskSpec> = if value.is_array() {
        serde_json::from_value(value).map_err(|e| ServiceError::Invalid(e.to_string()))?
    } else {
        vec![serde_json::from_value(value).map_err(|e| ServiceError::Invalid(e.to_string()))?]
    };
    let ids = write(&st, move |s| s.create_tasks(specs)).await?;
    Ok((StatusCode::CREATED, Json(json!({"task_ids": ids}))).into_response())
}

#[derive(Debug, Deserialize)]
struct AnnotatorQuery {
    annotator: Option<String>,
}

async fn next_task(State(st): State<AppState>, Query(q): Query<AnnotatorQuery>) -> ServiceResult<Response> {
    let annotator = q
        .annotator
        .ok_or_else(|| ServiceError::Unauthorized("annotator query parameter is required".into()))?;
    let next = write(&st, move |s| s.next_task(&annotator)).await?;
    Ok(Json(next).into_response())
}

async fn get_task(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<AnnotatorQuery>,
) -> ServiceResult<Response> {
    let view = read(&st, |s| s.get_task(&id, q.annotator.as_deref()))?;
    Ok(Json(view).into_response())
}

async fn submit(State(st): State<AppState>, body: Bytes) -> ServiceResult<Response> {
    let sub: JudgmentSubmission = parse(&body)?;
    let ack = write(&st, move |s| s.submit(sub)).await?;
    let status = if ack.duplicate {
        StatusCode::OK
    } else {
        StatusCode::CREATED
    };
    Ok((status, Json(ack)).into_response())
}

#[derive(Debug, Deserialize)]
struct ReportParams {
    /// Comma-separated task ids.
    tasks: Option<String>,
    #[serde(default)]
    practice: bool,
}

async fn report(State(st): State<AppState>, Query(p): Query<ReportParams>) -> ServiceResult<Response> {
    let query = ReportQuery {
        tasks: p.tasks.map(|t| {
            t.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        }),
        practice: p.practice,
    };
    let r = read(&st, |s| agreement_report(s.state(), &query))?;
    Ok(Json(r).into_response())
}

/// The API routes plus, when a directory is given, static files under /app.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/annotators", post(register))
        .route("/tasks", post(create_tasks))
        .route("/tasks/next", get(next_task))
        .route("/tasks/{id}", get(get_task))
        .route("/judgments", post(submit))
        .route("/reports/agreement", get(report))
        .route_layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state);
    match static_dir {
        Some(dir) => api.nest_service("/app", tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
