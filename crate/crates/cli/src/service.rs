//! Localhost capture service. One live session at a time; the simulator
//! advances on the server clock, lazily, whenever a request arrives.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use gazedrive::simworld::{DrivingAction, GazeSample, LiveSession, SessionConfig};

/// Header carrying the server-clock time of a served frame.
pub const T_MS_HEADER: &str = "t_ms";

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

/// Milliseconds since the service started.
pub struct SystemClock(Instant);

impl SystemClock {
    pub fn new() -> Self {
        SystemClock(Instant::now())
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

/// A clock that only moves when told to.
#[derive(Clone, Default)]
pub struct ManualClock(Arc<AtomicU64>);

impl ManualClock {
    pub fn set(&self, t_ms: u64) {
        self.0.store(t_ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

struct Active {
    id: String,
    live: LiveSession,
    start_ms: u64,
    period_ms: f64,
    ticks: u64,
    dropped_gaze: usize,
}

impl Active {
    /// Renders every frame due by `now`.
    fn catch_up(&mut self, now: u64) -> Result<(), ApiError> {
        let due = (now.saturating_sub(self.start_ms) as f64 / self.period_ms).floor() as u64;
        while self.ticks < due {
            self.ticks += 1;
            let t = self.start_ms + (self.ticks as f64 * self.period_ms).round() as u64;
            self.live.tick(t).map_err(ApiError::internal)?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct Slot {
    active: Option<Active>,
    started: u64,
}

pub struct ServiceState {
    clock: Arc<dyn Clock>,
    out_dir: PathBuf,
    base: SessionConfig,
    slot: Mutex<Slot>,
}

impl ServiceState {
    /// Finished sessions are written under `out_dir/<session_id>`. `base`
    /// supplies everything a start request does not set.
    pub fn new(clock: Arc<dyn Clock>, out_dir: PathBuf, base: SessionConfig) -> Arc<Self> {
        Arc::new(ServiceState {
            clock,
            out_dir,
            base,
            slot: Mutex::new(Slot::default()),
        })
    }

    fn lock(&self) -> MutexGuard<'_, Slot> {
        self.slot.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

#[derive(Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.kind.into(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

fn active<'a>(slot: &'a mut Slot, id: &str) -> Result<&'a mut Active, ApiError> {
    match &mut slot.active {
        Some(a) if a.id == id => Ok(a),
        _ => Err(ApiError::new(StatusCode::NOT_FOUND, "not-found", format!("no live session {id:?}"))),
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct StartRequest {
    pub track: Option<String>,
    pub frame_rate_hz: Option<f64>,
    pub resolution: Option<usize>,
    pub gaze_rate_hz: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StartResponse {
    pub session_id: String,
    pub t_ms: u64,
    pub frame_rate_hz: f64,
    pub resolution: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActionRequest {
    pub t_ms: u64,
    pub steering: f64,
    pub throttle: f64,
    pub brake: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActionResponse {
    /// Time of the last frame shown before the action takes effect.
    pub after_frame_t_ms: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GazeBatch {
    pub samples: Vec<GazeSample>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GazeResponse {
    pub accepted: usize,
    pub dropped: usize,
    pub total: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FinishResponse {
    pub session_id: String,
    pub path: PathBuf,
    pub frames: usize,
    pub gaze_samples: usize,
    pub dropped_gaze: usize,
}

async fn start(
    State(st): State<Arc<ServiceState>>,
    body: Option<Json<StartRequest>>,
) -> Result<Json<StartResponse>, ApiError> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let mut slot = st.lock();
    if let Some(a) = &slot.active {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "session-active",
            format!("session {} is still live; finish it first", a.id),
        ));
    }
    let mut cfg = st.base.clone();
    if let Some(t) = req.track {
        cfg.track = t;
    }
    if let Some(r) = req.frame_rate_hz {
        cfg.frame_rate_hz = r;
    }
    if let Some(r) = req.resolution {
        cfg.resolution = r;
    }
    if let Some(r) = req.gaze_rate_hz {
        cfg.gaze_rate_hz = r;
    }
    let now = st.clock.now_ms();
    let live = LiveSession::start(cfg.clone(), now)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid-argument", e.to_string()))?;
    slot.started += 1;
    let id = format!("s{:04}", slot.started);
    slot.active = Some(Active {
        id: id.clone(),
        live,
        start_ms: now,
        period_ms: 1000.0 / cfg.frame_rate_hz,
        ticks: 0,
        dropped_gaze: 0,
    });
    Ok(Json(StartResponse {
        session_id: id,
        t_ms: now,
        frame_rate_hz: cfg.frame_rate_hz,
        resolution: cfg.resolution,
    }))
}

async fn frame(State(st): State<Arc<ServiceState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let now = st.clock.now_ms();
    let mut slot = st.lock();
    let a = active(&mut slot, &id)?;
    a.catch_up(now)?;
    let f = a.live.latest_frame();
    let png = f.to_png().map_err(ApiError::internal)?;
    let headers = [
        (header::CONTENT_TYPE, HeaderValue::from_static("image/png")),
        (header::HeaderName::from_static(T_MS_HEADER), HeaderValue::from(f.t_ms)),
    ];
    Ok((headers, png).into_response())
}

async fn action(
    State(st): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    Json(req): Json<ActionRequest>,
) -> Result<Json<ActionResponse>, ApiError> {
    let now = st.clock.now_ms();
    if ![req.steering, req.throttle, req.brake].iter().all(|v| v.is_finite()) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid-argument", "action values must be finite"));
    }
    if req.t_ms > now {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid-argument",
            format!("action stamped {} ms is ahead of the server clock ({now} ms)", req.t_ms),
        ));
    }
    let mut slot = st.lock();
    let a = active(&mut slot, &id)?;
    a.catch_up(now)?;
    a.live.set_action(DrivingAction::new(req.steering, req.throttle, req.brake));
    Ok(Json(ActionResponse {
        after_frame_t_ms: a.live.latest_frame().t_ms,
    }))
}

async fn gaze(
    State(st): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    Json(batch): Json<GazeBatch>,
) -> Result<Json<GazeResponse>, ApiError> {
    let now = st.clock.now_ms();
    let mut slot = st.lock();
    let a = active(&mut slot, &id)?;
    let received = batch.samples.len();
    let mut accepted = 0;
    for mut s in batch.samples {
        // Nothing can be seen after it was received.
        s.t_ms = s.t_ms.min(now);
        if s.x.is_finite() && s.y.is_finite() && a.live.push_gaze(s) {
            accepted += 1;
        }
    }
    a.dropped_gaze += received - accepted;
    Ok(Json(GazeResponse {
        accepted,
        dropped: received - accepted,
        total: a.live.gaze_count(),
    }))
}

async fn finish(State(st): State<Arc<ServiceState>>, Path(id): Path<String>) -> Result<Json<FinishResponse>, ApiError> {
    let now = st.clock.now_ms();
    let mut slot = st.lock();
    active(&mut slot, &id)?.catch_up(now)?;
    let a = slot.active.take().expect("checked above");
    let log = a.live.finish().map_err(ApiError::internal)?;
    let path = st.out_dir.join(&a.id);
    log.save(&path).map_err(ApiError::internal)?;
    Ok(Json(FinishResponse {
        session_id: a.id,
        path,
        frames: log.frames.len(),
        gaze_samples: log.gaze.len(),
        dropped_gaze: a.dropped_gaze,
    }))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/session/start", post(start))
        .route("/session/{id}/frame", get(frame))
        .route("/session/{id}/action", post(action))
        .route("/session/{id}/gaze", post(gaze))
        .route("/session/{id}/finish", post(finish))
        .with_state(state)
}
