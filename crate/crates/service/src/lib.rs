//! HTTP facade over one annotation session.
//!
//! Mutating requests take the session write lock for the duration of the
//! operation, so they are applied one at a time. Mask previews only read the
//! image path and alpha under the lock and segment outside it.

mod error;

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Body;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nucleus_core::session::{Direction, Session, SessionError, Summary};
use nucleus_core::{AnnotationRecord, RgbImage};
use serde::Deserialize;
use tower_http::services::ServeDir;

pub use error::ApiError;

type Shared = Arc<RwLock<Session>>;

/// Builds the application. `ui_dir`, when given, is served at `/`.
pub fn router(session: Session, ui_dir: Option<PathBuf>) -> Router {
    let state: Shared = Arc::new(RwLock::new(session));
    let api = Router::new()
        .route("/api/session", get(summary))
        .route("/api/session/cursor", post(cursor))
        .route("/api/images/{id}", get(image))
        .route("/api/images/{id}/record", get(record))
        .route("/api/images/{id}/mask", get(mask))
        .route("/api/images/{id}/offset", post(offset))
        .route("/api/images/{id}/accept", post(accept))
        .route("/api/images/{id}/fail", post(fail))
        .route("/api/{*rest}", get(no_route).post(no_route))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api.route("/", get(no_ui)),
    }
}

/// Runs the application on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::io(format!("worker failed: {e}")))?
}

fn read(state: &Shared) -> std::sync::RwLockReadGuard<'_, Session> {
    state.read().unwrap_or_else(|p| p.into_inner())
}

fn write(state: &Shared) -> std::sync::RwLockWriteGuard<'_, Session> {
    state.write().unwrap_or_else(|p| p.into_inner())
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v).map_err(|e| ApiError::invalid_param(e.body_text()))
}

async fn summary(State(state): State<Shared>) -> Json<Summary> {
    Json(read(&state).summary())
}

#[derive(Deserialize)]
struct CursorBody {
    direction: Direction,
}

async fn cursor(State(state): State<Shared>, body: Result<Json<CursorBody>, JsonRejection>) -> Result<Json<Summary>, ApiError> {
    let direction = json_body(body)?.direction;
    let mut s = write(&state);
    s.navigate(direction);
    Ok(Json(s.summary()))
}

async fn record(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<AnnotationRecord>, ApiError> {
    Ok(Json(read(&state).record(&id)?.clone()))
}

async fn image(State(state): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let path = read(&state).image_path(&id)?;
    let bytes = blocking(move || {
        let bytes = std::fs::read(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                read(&state).flag_orphaned(&id);
            }
            ApiError::io(format!("cannot read {}: {e}", path.display()))
        })?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        match ext.as_str() {
            "png" => Ok(("image/png", bytes)),
            "jpg" | "jpeg" => Ok(("image/jpeg", bytes)),
            _ => {
                let img = RgbImage::decode(&bytes).map_err(ApiError::io)?;
                Ok(("image/png", img.to_png().map_err(|e| ApiError::io(e.to_string()))?))
            }
        }
    })
    .await?;
    Ok(binary(bytes.0, bytes.1))
}

fn binary(content_type: &'static str, bytes: Vec<u8>) -> Response {
    let mut res = Body::from(bytes).into_response();
    res.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type));
    res.headers_mut().insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
    res
}

#[derive(Deserialize)]
struct MaskQuery {
    offset: Option<String>,
}

async fn mask(
    State(state): State<Shared>,
    Path(id): Path<String>,
    query: Result<Query<MaskQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(query) = query.map_err(|e| ApiError::invalid_param(e.body_text()))?;
    let (path, alpha, stored) = {
        let s = read(&state);
        let rec = s.record(&id)?;
        (s.image_path(&id)?, s.default_alpha(), rec.user_offset)
    };
    let offset = match query.offset {
        None => stored,
        Some(raw) => raw
            .trim()
            .parse::<i32>()
            .map_err(|_| ApiError::invalid_param(format!("offset must be an integer, got {raw:?}")))?,
    };

    let (png, t) = blocking(move || {
        let img = RgbImage::load(&path).map_err(|e| {
            if !path.exists() {
                read(&state).flag_orphaned(&id);
            }
            ApiError::io(e.to_string())
        })?;
        let seg = nucleus_core::segment(&img, alpha, offset)
            .map_err(|e| ApiError::from(SessionError::Degenerate { id: id.clone(), source: e }).degenerate())?;
        let png = seg.mask.to_png().map_err(|e| ApiError::io(e.to_string()))?;
        Ok((png, seg.thresholds))
    })
    .await?;

    let mut res = binary("image/png", png);
    let headers = res.headers_mut();
    for (name, v) in [("x-thv1", t.thv1), ("x-thv2", t.thv2), ("x-uthv", t.uthv), ("x-effective", t.effective)] {
        headers.insert(name, HeaderValue::from_str(&v.to_string()).expect("numeric header"));
    }
    headers.insert("x-offset", HeaderValue::from_str(&t.user_offset.to_string()).expect("numeric header"));
    Ok(res)
}

#[derive(Deserialize)]
struct OffsetBody {
    delta: i32,
}

async fn offset(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<OffsetBody>, JsonRejection>,
) -> Result<Json<AnnotationRecord>, ApiError> {
    let delta = json_body(body)?.delta;
    blocking(move || Ok(write(&state).adjust_threshold(&id, delta)?)).await.map(Json)
}

async fn accept(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<AnnotationRecord>, ApiError> {
    blocking(move || Ok(write(&state).accept(&id)?)).await.map(Json)
}

async fn fail(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<AnnotationRecord>, ApiError> {
    blocking(move || Ok(write(&state).mark_failed(&id)?)).await.map(Json)
}

async fn no_route() -> ApiError {
    ApiError::not_found("no such endpoint".into())
}

async fn no_ui() -> (StatusCode, &'static str) {
    (StatusCode::OK, "No UI bundle installed. The API is served under /api/.\n")
}
