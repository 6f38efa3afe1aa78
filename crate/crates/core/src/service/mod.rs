//! HTTP inference service: upload a mixture once, then re-render remixes
//! and stems from the cached separation.
//!
//! | method | path                        | body / result                                  |
//! |--------|-----------------------------|------------------------------------------------|
//! | POST   | `/v1/sessions`              | multipart field `file` (mono WAV) → session JSON |
//! | POST   | `/v1/sessions/{id}/remix`   | `{"gains_db": [..]}` → float32 WAV             |
//! | GET    | `/v1/sessions/{id}/stems`   | `multipart/mixed`, one WAV per source          |
//! | GET    | `/v1/model`                 | variant, config, checkpoint digest, labels     |
//! | GET    | `/v1/debug/counters`        | separation / decoder run counts                |
//!
//! Remix responses carry `x-remixer-remix`, a JSON object with the requested
//! and applied gains and a per-source clamping flag.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;
use uuid::Uuid;

use crate::data::{decode_wav, encode_wav, parse_header, BitDepth};
use crate::error::Error;
use crate::model::{decode_cached, forward_separate, remix_from_estimates, sha256_hex, Checkpoint, SeparationOutput, Variant};
use crate::signal::{GainVector, Waveform};

/// Gains are clamped to this many dB either side of unity.
pub const MAX_GAIN_DB: f64 = 24.0;
pub const REMIX_HEADER: &str = "x-remixer-remix";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_upload_s: f64,
    pub session_ttl: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            max_upload_s: 60.0,
            session_ttl: Duration::from_secs(30 * 60),
        }
    }
}

/// A checkpoint and the SHA-256 of its serialized bytes.
#[derive(Debug)]
pub struct LoadedModel {
    pub checkpoint: Checkpoint,
    pub sha256: String,
}

impl LoadedModel {
    pub fn from_file(path: impl AsRef<Path>) -> crate::Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(LoadedModel {
            checkpoint: Checkpoint::from_bytes(&bytes)?,
            sha256: sha256_hex(&bytes),
        })
    }

    pub fn from_checkpoint(checkpoint: Checkpoint) -> crate::Result<Self> {
        let sha256 = sha256_hex(&checkpoint.to_bytes()?);
        Ok(LoadedModel { checkpoint, sha256 })
    }
}

#[derive(Debug, Default)]
pub struct Counters {
    /// Encoder + separator runs.
    pub separations: AtomicU64,
    /// Decoder-only re-renders.
    pub decodes: AtomicU64,
}

struct Session {
    separation: SeparationOutput,
}

struct SessionSlot {
    last_used: Instant,
    session: Arc<tokio::sync::Mutex<Session>>,
}

pub struct AppState {
    model: Option<Arc<LoadedModel>>,
    config: ServiceConfig,
    sessions: Mutex<HashMap<Uuid, SessionSlot>>,
    pub counters: Counters,
}

impl AppState {
    pub fn new(model: Option<LoadedModel>, config: ServiceConfig) -> Arc<Self> {
        Arc::new(AppState {
            model: model.map(Arc::new),
            config,
            sessions: Mutex::new(HashMap::new()),
            counters: Counters::default(),
        })
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().map(|m| m.len()).unwrap_or(0)
    }

    fn evict_expired(&self, now: Instant) {
        if let Ok(mut map) = self.sessions.lock() {
            let ttl = self.config.session_ttl;
            map.retain(|_, slot| now.duration_since(slot.last_used) < ttl);
        }
    }

    fn touch(&self, id: Uuid) -> Option<Arc<tokio::sync::Mutex<Session>>> {
        let now = Instant::now();
        self.evict_expired(now);
        let mut map = self.sessions.lock().ok()?;
        let slot = map.get_mut(&id)?;
        slot.last_used = now;
        Some(slot.session.clone())
    }
}

/// Error response: status plus `{"error": message}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Parse { .. } => StatusCode::BAD_REQUEST,
            Error::UnsupportedAudio { .. } => StatusCode::UNSUPPORTED_MEDIA_TYPE,
            Error::InvalidArgument(_) | Error::Domain(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn model_of(state: &AppState) -> ApiResult<Arc<LoadedModel>> {
    state
        .model
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no checkpoint loaded"))
}

fn parse_id(raw: &str) -> ApiResult<Uuid> {
    Uuid::parse_str(raw).map_err(|_| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {raw}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> crate::Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub duration_s: f64,
    pub sample_rate: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub labels: Vec<String>,
}

async fn create_session(State(state): State<Arc<AppState>>, mut multipart: Multipart) -> ApiResult<Json<SessionInfo>> {
    let model = model_of(&state)?;
    let mut bytes = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?
    {
        if field.name() == Some("file") {
            let data = field
                .bytes()
                .await
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
            bytes = Some(data);
            break;
        }
    }
    let bytes = bytes.ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "multipart field \"file\" is missing"))?;

    let info = parse_header(&bytes)?;
    let rate = model.checkpoint.params.config.sample_rate;
    if info.sample_rate != rate {
        return Err(ApiError::new(
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            format!("audio is {} Hz; the model expects {rate} Hz (resample before upload)", info.sample_rate),
        ));
    }
    let frames = info.data_len / (info.bits_per_sample as usize / 8);
    let duration_s = frames as f64 / rate as f64;
    if duration_s > state.config.max_upload_s {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("{duration_s:.1} s exceeds the {} s limit", state.config.max_upload_s),
        ));
    }
    if frames == 0 {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "audio has no samples"));
    }

    let x = decode_wav(&bytes)?;
    let m = model.clone();
    let separation = blocking(move || forward_separate(&m.checkpoint.params, &x)).await?;
    state.counters.separations.fetch_add(1, Ordering::Relaxed);

    let id = Uuid::new_v4();
    let now = Instant::now();
    state.evict_expired(now);
    if let Ok(mut map) = state.sessions.lock() {
        map.insert(
            id,
            SessionSlot {
                last_used: now,
                session: Arc::new(tokio::sync::Mutex::new(Session { separation })),
            },
        );
    }
    Ok(Json(SessionInfo {
        session_id: id.to_string(),
        duration_s,
        sample_rate: rate,
        k: model.checkpoint.k(),
        labels: model.checkpoint.labels.clone(),
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemixRequest {
    pub gains_db: Vec<f64>,
}

/// Requested and applied gains of a remix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemixInfo {
    pub requested_gains_db: Vec<f64>,
    pub applied_gains_db: Vec<f64>,
    pub clamped: Vec<bool>,
}

/// Clamps each gain to `±MAX_GAIN_DB`.
pub fn clamp_gains(requested: &[f64]) -> crate::Result<RemixInfo> {
    if let Some(g) = requested.iter().find(|g| !g.is_finite()) {
        return Err(Error::invalid(format!("gain {g} dB is not finite")));
    }
    let applied: Vec<f64> = requested.iter().map(|g| g.clamp(-MAX_GAIN_DB, MAX_GAIN_DB)).collect();
    Ok(RemixInfo {
        clamped: requested.iter().zip(&applied).map(|(r, a)| r != a).collect(),
        requested_gains_db: requested.to_vec(),
        applied_gains_db: applied,
    })
}

fn wav_response(w: &Waveform, extra: Option<(&str, String)>) -> ApiResult<Response> {
    let mut resp = Response::new(Body::from(encode_wav(w, BitDepth::Float32)));
    let h = resp.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static("audio/wav"));
    if let Some((name, value)) = extra {
        let v = HeaderValue::from_str(&value).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        h.insert(
            header::HeaderName::from_bytes(name.as_bytes())
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?,
            v,
        );
    }
    Ok(resp)
}

async fn remix(
    State(state): State<Arc<AppState>>,
    UrlPath(raw_id): UrlPath<String>,
    body: axum::body::Bytes,
) -> ApiResult<Response> {
    let model = model_of(&state)?;
    let id = parse_id(&raw_id)?;
    let session = state
        .touch(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}")))?;
    let req: RemixRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid remix request: {e}")))?;
    let k = model.checkpoint.k();
    if req.gains_db.len() != k {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("expected {k} gains, got {}", req.gains_db.len()),
        ));
    }
    let info = clamp_gains(&req.gains_db)?;
    let gains = GainVector::from_db(info.applied_gains_db.clone())?;

    let guard = session.lock_owned().await;
    let latent_path = model.checkpoint.variant == Variant::Model2;
    let m = model.clone();
    let (out, guard) = tokio::task::spawn_blocking(move || {
        let r = if latent_path {
            decode_cached(&m.checkpoint.params, &guard.separation, Some(&gains))
                .map(|stems| crate::signal::weighted_sum(&stems, &vec![1.0; stems.len()]))
        } else {
            remix_from_estimates(&guard.separation, &gains)
        };
        (r, guard)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    drop(guard);
    let out = out?;
    if latent_path {
        state.counters.decodes.fetch_add(1, Ordering::Relaxed);
    }
    let header_json = serde_json::to_string(&info).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    wav_response(&out, Some((REMIX_HEADER, header_json)))
}

/// Boundary used by the stems response.
pub const STEMS_BOUNDARY: &str = "remixer-stem-boundary";

async fn stems(State(state): State<Arc<AppState>>, UrlPath(raw_id): UrlPath<String>) -> ApiResult<Response> {
    let model = model_of(&state)?;
    let id = parse_id(&raw_id)?;
    let session = state
        .touch(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}")))?;
    let guard = session.lock().await;
    let mut body = Vec::new();
    for (label, est) in model.checkpoint.labels.iter().zip(&guard.separation.estimates) {
        body.extend_from_slice(format!("--{STEMS_BOUNDARY}\r\n").as_bytes());
        body.extend_from_slice(b"Content-Type: audio/wav\r\n");
        body.extend_from_slice(format!("Content-Disposition: attachment; name=\"{label}\"; filename=\"{label}.wav\"\r\n\r\n").as_bytes());
        body.extend_from_slice(&encode_wav(est, BitDepth::Float32));
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{STEMS_BOUNDARY}--\r\n").as_bytes());
    let mut resp = Response::new(Body::from(body));
    resp.headers_mut().insert(
        header::CONTENT_TYPE,
        HeaderValue::from_str(&format!("multipart/mixed; boundary={STEMS_BOUNDARY}"))
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?,
    );
    Ok(resp)
}

async fn model_info(State(state): State<Arc<AppState>>) -> ApiResult<Json<serde_json::Value>> {
    let model = model_of(&state)?;
    let ck = &model.checkpoint;
    Ok(Json(json!({
        "variant": ck.variant,
        "config": ck.params.config,
        "checkpoint_sha256": model.sha256,
        "labels": ck.labels,
        "loss_weights": ck.loss_weights,
    })))
}

async fn counters(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "separations": state.counters.separations.load(Ordering::Relaxed),
        "decodes": state.counters.decodes.load(Ordering::Relaxed),
        "sessions": state.session_count(),
    }))
}

/// Request body limit derived from the upload duration limit, with room for multipart framing.
fn body_limit(state: &AppState) -> usize {
    let rate = state.model.as_ref().map_or(48_000, |m| m.checkpoint.params.config.sample_rate) as f64;
    (state.config.max_upload_s * rate * 4.0) as usize + (1 << 20)
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = body_limit(&state);
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/remix", post(remix))
        .route("/v1/sessions/{id}/stems", get(stems))
        .route("/v1/model", get(model_info))
        .route("/v1/debug/counters", get(counters))
        .layer(DefaultBodyLimit::max(limit))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds the listening socket; port 0 picks a free port.
pub async fn bind(addr: SocketAddr) -> crate::Result<tokio::net::TcpListener> {
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::Config(format!("cannot listen on {addr}: {e}")))
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    state: Arc<AppState>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> crate::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| Error::Config(format!("server error: {e}")))
}
