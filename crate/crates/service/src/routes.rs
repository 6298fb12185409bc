//! HTTP routes.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use forge_core::env::{piece_preview, Action};
use forge_core::palette;
use forge_core::voxel::Rotation;
use serde::Deserialize;

use crate::api::*;
use crate::state::AppState;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.code.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = Arc<AppState>;

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    body.map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

/// Runs blocking work (rendering, disk appends) off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "schema_version": API_SCHEMA_VERSION, "ok": true }))
}

async fn list_instances(State(s): State<Shared>) -> Json<InstanceList> {
    Json(s.instances())
}

async fn get_instance(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<InstanceDetail>> {
    s.instance_detail(&id).map(Json)
}

#[derive(Deserialize)]
struct PreviewQuery {
    #[serde(default)]
    rotation: usize,
}

async fn piece_preview_png(
    State(s): State<Shared>,
    Path((id, color)): Path<(String, String)>,
    q: Result<Query<PreviewQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = q.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let inst = s.instance(&id)?.clone();
    let piece = inst
        .piece_by_color(&color)
        .ok_or_else(|| ApiError::not_found("piece colour", &color))?;
    let rot = Rotation::from_index(q.rotation).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let png = blocking(move || {
        let rgb = palette::lookup(&inst.pieces[piece].color).map_or([128; 3], |e| e.rgb);
        Ok(piece_preview(&inst.pieces[piece].cells, &rot, rgb))
    })
    .await?;
    Ok(png_response(Bytes::from(png)))
}

fn png_response(png: Bytes) -> Response {
    (
        [
            (header::CONTENT_TYPE, "image/png"),
            (header::CACHE_CONTROL, "public, max-age=31536000, immutable"),
        ],
        png,
    )
        .into_response()
}

async fn get_image(State(s): State<Shared>, Path(file): Path<String>) -> ApiResult<Response> {
    let sha = file
        .strip_suffix(".png")
        .ok_or_else(|| ApiError::not_found("image", &file))?;
    s.image(sha)
        .map(png_response)
        .ok_or_else(|| ApiError::not_found("image", &file))
}

async fn create_episode(
    State(s): State<Shared>,
    body: Result<Json<CreateEpisode>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<CreatedEpisode>)> {
    let req = json_body(body)?;
    let created = blocking(move || s.create_episode(&req)).await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn list_episodes(State(s): State<Shared>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "schema_version": API_SCHEMA_VERSION, "episodes": s.episode_ids() }))
}

async fn get_episode(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<EpisodeHandle>> {
    let slot = s.slot(&id)?;
    let handle = slot.lock().unwrap().handle(&id);
    Ok(Json(handle))
}

async fn get_observation(
    State(s): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<Json<WireObservation>> {
    let slot = s.slot(&id)?;
    blocking(move || Ok(s.observation(&slot.lock().unwrap())))
        .await
        .map(Json)
}

async fn post_action(
    State(s): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<Action>, JsonRejection>,
) -> ApiResult<Json<StepResponse>> {
    // Unknown episodes are 404 even when the body is also malformed.
    s.slot(&id)?;
    let action = json_body(body)?;
    blocking(move || s.step(&id, action)).await.map(Json)
}

async fn get_result(
    State(s): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<Json<forge_core::eval::driver::EpisodeResult>> {
    let slot = s.slot(&id)?;
    let result = slot.lock().unwrap().result(&id);
    Ok(Json(result))
}

async fn post_calibration(
    State(s): State<Shared>,
    body: Result<Json<CalibrationRequest>, JsonRejection>,
) -> ApiResult<Json<CalibrationResponse>> {
    let req = json_body(body)?;
    blocking(move || s.calibrate(&req)).await.map(Json)
}

fn token_of(headers: &HeaderMap) -> Option<&str> {
    if let Some(v) = headers.get("x-forge-token").and_then(|v| v.to_str().ok()) {
        return Some(v);
    }
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
}

async fn require_token(State(s): State<Shared>, req: Request, next: Next) -> Response {
    if let Some(expected) = &s.config.token {
        if token_of(req.headers()) != Some(expected.as_str()) {
            return ApiError::new(ErrorCode::Unauthorized, "missing or wrong token").into_response();
        }
    }
    next.run(req).await
}

async fn fallback() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such route")
}

/// Images and the health check stay open so that `<img>` tags work
/// without headers; image paths are content hashes.
pub fn router(state: Shared) -> Router {
    let guarded = Router::new()
        .route("/instances", get(list_instances))
        .route("/instances/{id}", get(get_instance))
        .route("/instances/{id}/pieces/{color}/preview", get(piece_preview_png))
        .route("/episodes", post(create_episode).get(list_episodes))
        .route("/episodes/{id}", get(get_episode))
        .route("/episodes/{id}/observation", get(get_observation))
        .route("/episodes/{id}/actions", post(post_action))
        .route("/episodes/{id}/result", get(get_result))
        .route("/calibration", post(post_calibration))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/health", get(health))
        .route("/images/{file}", get(get_image))
        .merge(guarded)
        .fallback(fallback)
        .with_state(state)
}
