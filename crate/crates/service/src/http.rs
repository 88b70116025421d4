//! JSON/PNG/SSE routes over [`Engine`].

use std::collections::{HashMap, VecDeque};
use std::convert::Infallible;
use std::sync::{Arc, Mutex};

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post, put};
use axum::{Json, Router};
use notana_core::generation::FrameRecord;
use notana_core::intent::UnitEdits;
use notana_core::workspace::{BrushState, Layer};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{BlockOp, CreateRequest, Engine, FrameView};
use crate::error::{ApiError, ErrorCode};

pub const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;
pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
pub const REPLAY_HEADER: &str = "idempotent-replay";
const IDEMPOTENCY_CAPACITY: usize = 4096;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    idempotency: Arc<IdempotencyCache>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>) -> Self {
        Self {
            engine,
            idempotency: Arc::new(IdempotencyCache::default()),
        }
    }
}

pub fn router(engine: Arc<Engine>) -> Router {
    let state = AppState::new(engine);
    Router::new()
        .route("/health", get(health))
        .route("/workspaces", post(create).get(list))
        .route("/workspaces/{id}", get(workspace))
        .route("/workspaces/{id}/layers/{layer}", put(put_layer).get(get_layer))
        .route("/workspaces/{id}/brush", patch(set_brush))
        .route("/workspaces/{id}/strokes", post(paint))
        .route("/workspaces/{id}/infer", post(infer))
        .route("/workspaces/{id}/reinfer", post(reinfer))
        .route("/workspaces/{id}/units/{uid}/edits", post(edit_unit))
        .route("/workspaces/{id}/units/{uid}/sliders/{sid}", patch(set_slider))
        .route("/workspaces/{id}/timeline/blocks", post(add_block))
        .route("/workspaces/{id}/timeline/blocks/{action}", post(block_action))
        .route("/workspaces/{id}/generate", post(generate))
        .route("/workspaces/{id}/frames/{index}", get(frame))
        .route("/workspaces/{id}/frames/{index}/regenerate", post(regenerate))
        .route("/workspaces/{id}/onion", get(onion))
        .route("/workspaces/{id}/save", post(save))
        .route("/workspaces/{id}/history", get(history))
        .route("/workspaces/{id}/history/{snapshot}", get(snapshot))
        .layer(middleware::from_fn_with_state(state.clone(), idempotency))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, format!("worker failed: {e}")))?
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::validation(format!("invalid JSON body: {e}")))
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

fn layer(name: &str) -> Result<Layer, ApiError> {
    Layer::parse(name).ok_or_else(|| ApiError::not_found(format!("layer {name}; use drawing or notation")))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FramesResponse {
    pub frames: Vec<FrameView>,
}

impl FramesResponse {
    fn of(id: &str, records: &[FrameRecord]) -> Self {
        Self {
            frames: records.iter().map(|r| FrameView::of(id, r)).collect(),
        }
    }
}

async fn health(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.engine.health())
}

async fn list(State(s): State<AppState>) -> Result<impl IntoResponse, ApiError> {
    let engine = s.engine.clone();
    let ids = blocking(move || Ok(engine.store().list_workspaces()?)).await?;
    Ok(Json(serde_json::json!({ "workspaces": ids })))
}

#[derive(Debug, Default, Deserialize)]
struct CreateQuery {
    id: Option<String>,
    width: Option<u32>,
    height: Option<u32>,
}

async fn create(
    State(s): State<AppState>,
    Query(q): Query<CreateQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let content_type = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("");
    let mut req = if content_type.starts_with("image/png") {
        CreateRequest {
            base_png: Some(body.to_vec()),
            ..CreateRequest::default()
        }
    } else if body.is_empty() {
        CreateRequest::default()
    } else {
        parse_json::<CreateRequest>(&body)?
    };
    req.id = req.id.or(q.id);
    req.width = req.width.or(q.width);
    req.height = req.height.or(q.height);
    let engine = s.engine.clone();
    let view = blocking(move || engine.create(req)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn workspace(State(s): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let engine = s.engine.clone();
    Ok(Json(blocking(move || engine.workspace_view(&id)).await?))
}

async fn put_layer(
    State(s): State<AppState>,
    Path((id, name)): Path<(String, String)>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let layer = layer(&name)?;
    let engine = s.engine.clone();
    blocking(move || engine.put_layer(&id, layer, &body)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_layer(
    State(s): State<AppState>,
    Path((id, name)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let layer = layer(&name)?;
    let engine = s.engine.clone();
    Ok(png(blocking(move || engine.layer_png(&id, layer)).await?))
}

async fn set_brush(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let brush: BrushState = parse_json(&body)?;
    let engine = s.engine.clone();
    Ok(Json(blocking(move || engine.set_brush(&id, brush)).await?))
}

#[derive(Deserialize)]
struct StrokeBody {
    points: Vec<(f64, f64)>,
}

async fn paint(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let stroke: StrokeBody = parse_json(&body)?;
    let engine = s.engine.clone();
    blocking(move || engine.paint(&id, &stroke.points)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn infer(State(s): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let engine = s.engine.clone();
    Ok(Json(blocking(move || engine.infer(&id)).await?))
}

async fn reinfer(State(s): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let engine = s.engine.clone();
    Ok(Json(blocking(move || engine.reinfer(&id)).await?))
}

async fn edit_unit(
    State(s): State<AppState>,
    Path((id, uid)): Path<(String, String)>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let edits: UnitEdits = parse_json(&body)?;
    let engine = s.engine.clone();
    Ok(Json(blocking(move || engine.edit_unit(&id, &uid, &edits)).await?))
}

#[derive(Deserialize)]
struct SliderBody {
    value: f64,
}

async fn set_slider(
    State(s): State<AppState>,
    Path((id, uid, sid)): Path<(String, String, String)>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let SliderBody { value } = parse_json(&body)?;
    let engine = s.engine.clone();
    Ok(Json(blocking(move || engine.set_slider(&id, &uid, &sid, value)).await?))
}

#[derive(Deserialize)]
struct AddBlockBody {
    track_id: String,
    label: String,
    start: f64,
    duration: f64,
    #[serde(default)]
    description: String,
}

async fn add_block(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let b: AddBlockBody = parse_json(&body)?;
    let op = BlockOp::Add {
        track_id: b.track_id,
        label: b.label,
        start: b.start,
        duration: b.duration,
        description: b.description,
    };
    let engine = s.engine.clone();
    Ok((StatusCode::CREATED, Json(blocking(move || engine.edit_timeline(&id, &op)).await?)))
}

#[derive(Deserialize)]
struct MoveBody {
    start: f64,
}

#[derive(Deserialize)]
struct ResizeBody {
    duration: f64,
}

/// `POST …/blocks/{block_id}:{move|resize|delete}`.
async fn block_action(
    State(s): State<AppState>,
    Path((id, action)): Path<(String, String)>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let (block_id, verb) = action
        .rsplit_once(':')
        .ok_or_else(|| ApiError::not_found(format!("block action `{action}`; expected <block>:<move|resize|delete>")))?;
    let block_id = block_id.to_string();
    let op = match verb {
        "move" => BlockOp::Move {
            block_id,
            start: parse_json::<MoveBody>(&body)?.start,
        },
        "resize" => BlockOp::Resize {
            block_id,
            duration: parse_json::<ResizeBody>(&body)?.duration,
        },
        "delete" => BlockOp::Delete { block_id },
        other => return Err(ApiError::not_found(format!("block action `{other}`"))),
    };
    let engine = s.engine.clone();
    Ok(Json(blocking(move || engine.edit_timeline(&id, &op)).await?))
}

#[derive(Debug, Default, Deserialize)]
struct GenerateQuery {
    frames: Option<usize>,
}

fn wants_json(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|a| a.contains("application/json") && !a.contains("text/event-stream"))
}

/// Streams `frame` events as statuses change, then one `done` (or `error`)
/// event. With `Accept: application/json` answers once with the frame list.
async fn generate(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<GenerateQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let engine = s.engine.clone();
    let ticket = engine.begin_generation(&id)?;
    if wants_json(&headers) {
        let records = blocking(move || engine.generate(&ticket, q.frames, &mut |_| {})).await?;
        return Ok(Json(FramesResponse::of(&id, &records)).into_response());
    }
    // Fail with a plain status code before any event is sent.
    let ticket = {
        let engine = engine.clone();
        blocking(move || engine.plan(&ticket, q.frames).map(|_| ticket)).await?
    };
    let (tx, rx) = tokio::sync::mpsc::unbounded_channel::<Event>();
    tokio::task::spawn_blocking(move || {
        let mut on_frame = |r: &FrameRecord| {
            if let Ok(ev) = Event::default().event("frame").json_data(FrameView::of(&id, r)) {
                let _ = tx.send(ev);
            }
        };
        let outcome = engine.generate(&ticket, q.frames, &mut on_frame);
        drop(ticket);
        let last = match outcome {
            Ok(records) => Event::default().event("done").json_data(FramesResponse::of(&id, &records)),
            Err(e) => Event::default().event("error").json_data(&e),
        };
        if let Ok(ev) = last {
            let _ = tx.send(ev);
        }
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|ev| (Ok::<_, Infallible>(ev), rx))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()).into_response())
}

async fn regenerate(
    State(s): State<AppState>,
    Path((id, index)): Path<(String, usize)>,
) -> Result<impl IntoResponse, ApiError> {
    let engine = s.engine.clone();
    let ticket = engine.begin_generation(&id)?;
    let records = blocking(move || engine.regenerate(&ticket, index)).await?;
    Ok(Json(FramesResponse::of(&id, &records)))
}

async fn frame(State(s): State<AppState>, Path((id, index)): Path<(String, usize)>) -> Result<Response, ApiError> {
    let engine = s.engine.clone();
    Ok(png(blocking(move || engine.frame_png(&id, index)).await?))
}

#[derive(Deserialize)]
struct OnionQuery {
    frames: Option<String>,
}

async fn onion(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<OnionQuery>,
) -> Result<Response, ApiError> {
    let list = q
        .frames
        .ok_or_else(|| ApiError::validation("frames query parameter is required, e.g. ?frames=0,1"))?;
    let indices = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| ApiError::validation(format!("bad frame index `{s}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if indices.is_empty() {
        return Err(ApiError::validation("select at least one frame"));
    }
    let engine = s.engine.clone();
    Ok(png(blocking(move || engine.onion(&id, &indices)).await?))
}

async fn save(State(s): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let engine = s.engine.clone();
    Ok((StatusCode::CREATED, Json(blocking(move || engine.save(&id)).await?)))
}

async fn history(State(s): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let engine = s.engine.clone();
    let snapshots = blocking(move || engine.history(&id)).await?;
    Ok(Json(serde_json::json!({ "snapshots": snapshots })))
}

async fn snapshot(
    State(s): State<AppState>,
    Path((id, snap)): Path<(String, String)>,
) -> Result<impl IntoResponse, ApiError> {
    let engine = s.engine.clone();
    Ok(Json(blocking(move || engine.snapshot(&id, &snap)).await?))
}

#[derive(Clone)]
struct CachedResponse {
    request_digest: [u8; 32],
    status: StatusCode,
    content_type: Option<HeaderValue>,
    body: Bytes,
}

impl CachedResponse {
    fn replay(&self) -> Response {
        let mut resp = Response::new(Body::from(self.body.clone()));
        *resp.status_mut() = self.status;
        if let Some(ct) = &self.content_type {
            resp.headers_mut().insert(header::CONTENT_TYPE, ct.clone());
        }
        resp.headers_mut().insert(REPLAY_HEADER, HeaderValue::from_static("true"));
        resp
    }
}

type Cell = Arc<tokio::sync::Mutex<Option<CachedResponse>>>;

#[derive(Default)]
struct IdempotencyCache {
    cells: Mutex<(HashMap<String, Cell>, VecDeque<String>)>,
}

impl IdempotencyCache {
    fn cell(&self, key: &str) -> Cell {
        let mut guard = self.cells.lock().unwrap_or_else(|p| p.into_inner());
        let (map, order) = &mut *guard;
        if let Some(c) = map.get(key) {
            return c.clone();
        }
        if order.len() >= IDEMPOTENCY_CAPACITY {
            if let Some(old) = order.pop_front() {
                map.remove(&old);
            }
        }
        let cell = Cell::default();
        map.insert(key.to_string(), cell.clone());
        order.push_back(key.to_string());
        cell
    }
}

/// Replays the stored response for a repeated `Idempotency-Key` on a
/// state-changing request. Concurrent retries with the same key wait for the
/// first one. Transient failures (409, 5xx) are not remembered.
async fn idempotency(State(s): State<AppState>, req: Request, next: Next) -> Response {
    if matches!(*req.method(), Method::GET | Method::HEAD | Method::OPTIONS) {
        return next.run(req).await;
    }
    let Some(key) = req
        .headers()
        .get(IDEMPOTENCY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
    else {
        return next.run(req).await;
    };
    let scope = format!("{} {} {}", req.method(), req.uri().path(), key);
    let (parts, body) = req.into_parts();
    let bytes = match to_bytes(body, MAX_BODY_BYTES).await {
        Ok(b) => b,
        Err(e) => return ApiError::validation(format!("unreadable body: {e}")).into_response(),
    };
    let mut hasher = Sha256::new();
    hasher.update(parts.uri.query().unwrap_or("").as_bytes());
    hasher.update([0]);
    hasher.update(&bytes);
    let digest: [u8; 32] = hasher.finalize().into();

    let cell = s.idempotency.cell(&scope);
    let mut slot = cell.lock().await;
    if let Some(cached) = slot.as_ref() {
        if cached.request_digest != digest {
            return ApiError::new(
                ErrorCode::IdempotencyKeyReused,
                "this Idempotency-Key was already used with a different request",
            )
            .into_response();
        }
        return cached.replay();
    }
    let response = next.run(Request::from_parts(parts, Body::from(bytes))).await;
    let status = response.status();
    if status.is_server_error() || status == StatusCode::CONFLICT {
        return response;
    }
    let (rparts, rbody) = response.into_parts();
    let body = match to_bytes(rbody, usize::MAX).await {
        Ok(b) => b,
        Err(e) => return ApiError::new(ErrorCode::Internal, format!("response body: {e}")).into_response(),
    };
    let cached = CachedResponse {
        request_digest: digest,
        status,
        content_type: rparts.headers.get(header::CONTENT_TYPE).cloned(),
        body,
    };
    *slot = Some(cached.clone());
    let mut resp = Response::from_parts(rparts, Body::from(cached.body));
    resp.headers_mut().remove(header::CONTENT_LENGTH);
    resp
}
