use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use gazedrive::gazeprep::{build_dataset, DatasetConfig};
use gazedrive::simworld::{GazeSource, SessionConfig, SessionLog};
use gazedrive_cli::service::{router, ManualClock, ServiceState, T_MS_HEADER};

fn base() -> SessionConfig {
    SessionConfig {
        resolution: 64,
        frame_rate_hz: 10.0,
        gaze_rate_hz: 50.0,
        ..SessionConfig::default()
    }
}

fn app(out: &Path) -> (Router, ManualClock) {
    let clock = ManualClock::default();
    clock.set(1_000);
    let state = ServiceState::new(Arc::new(clock.clone()), out.to_path_buf(), base());
    (router(state), clock)
}

struct Reply {
    status: StatusCode,
    t_ms: Option<u64>,
    content_type: Option<String>,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap()
    }
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let header = |name: &str| resp.headers().get(name).map(|v| v.to_str().unwrap().to_string());
    let t_ms = header(T_MS_HEADER).map(|v| v.parse().unwrap());
    let content_type = header("content-type");
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        t_ms,
        content_type,
        body,
    }
}

async fn start(app: &Router) -> String {
    let r = send(app, "POST", "/session/start", Some(json!({}))).await;
    assert_eq!(r.status, StatusCode::OK);
    r.json()["session_id"].as_str().unwrap().to_string()
}

fn png_size(png: &[u8]) -> (u32, u32) {
    assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
    let w = u32::from_be_bytes(png[16..20].try_into().unwrap());
    let h = u32::from_be_bytes(png[20..24].try_into().unwrap());
    (w, h)
}

#[tokio::test]
async fn second_session_is_rejected_until_the_first_finishes() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let id = start(&app).await;
    let r = send(&app, "POST", "/session/start", None).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.json()["error"], "session-active");
    assert!(r.json()["message"].as_str().unwrap().contains(&id));

    let r = send(&app, "POST", &format!("/session/{id}/finish"), None).await;
    assert_eq!(r.status, StatusCode::OK);
    let next = start(&app).await;
    assert_ne!(next, id);
}

#[tokio::test]
async fn start_honours_request_fields_and_rejects_bad_ones() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let body = json!({"track": "stadium", "frame_rate_hz": 5.0, "resolution": 32});
    let r = send(&app, "POST", "/session/start", Some(body)).await;
    assert_eq!(r.status, StatusCode::OK);
    let v = r.json();
    assert_eq!(v["frame_rate_hz"], 5.0);
    assert_eq!(v["resolution"], 32);
    assert_eq!(v["t_ms"], 1000);
    let id = v["session_id"].as_str().unwrap().to_string();
    let r = send(&app, "GET", &format!("/session/{id}/frame"), None).await;
    assert_eq!(png_size(&r.body), (32, 32));
    send(&app, "POST", &format!("/session/{id}/finish"), None).await;

    let r = send(&app, "POST", "/session/start", Some(json!({"track": "moon"}))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let r = send(&app, "POST", "/session/start", Some(json!({"frame_rate_hz": -1.0}))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn frames_advance_with_the_server_clock() {
    let dir = tempfile::tempdir().unwrap();
    let (app, clock) = app(dir.path());
    let id = start(&app).await;
    let uri = format!("/session/{id}/frame");

    let r = send(&app, "GET", &uri, None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.content_type.as_deref(), Some("image/png"));
    assert_eq!(r.t_ms, Some(1000));
    assert_eq!(png_size(&r.body), (64, 64));
    let first = r.body;

    clock.advance(99);
    let r = send(&app, "GET", &uri, None).await;
    assert_eq!(r.t_ms, Some(1000));
    assert_eq!(r.body, first);

    clock.advance(1);
    assert_eq!(send(&app, "GET", &uri, None).await.t_ms, Some(1100));
    clock.advance(450);
    assert_eq!(send(&app, "GET", &uri, None).await.t_ms, Some(1500));

    let r = send(&app, "POST", &format!("/session/{id}/finish"), None).await;
    assert_eq!(r.json()["frames"], 6);
}

#[tokio::test]
async fn actions_apply_from_the_next_tick() {
    let dir = tempfile::tempdir().unwrap();
    let (app, clock) = app(dir.path());
    let id = start(&app).await;
    let act = format!("/session/{id}/action");

    clock.advance(150);
    let r = send(&app, "POST", &act, Some(json!({"t_ms": 1150, "steering": 0.5, "throttle": 1.0, "brake": 0.0}))).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["after_frame_t_ms"], 1100);

    clock.advance(100);
    let r = send(&app, "POST", &act, Some(json!({"t_ms": 1250, "steering": -0.25, "throttle": 0.0, "brake": 1.0}))).await;
    assert_eq!(r.json()["after_frame_t_ms"], 1200);

    clock.advance(100);
    let r = send(&app, "POST", &format!("/session/{id}/finish"), None).await;
    let path = r.json()["path"].as_str().unwrap().to_string();
    let log = SessionLog::load(Path::new(&path)).unwrap();
    let t: Vec<u64> = log.frames.iter().map(|f| f.t_ms).collect();
    assert_eq!(t, [1000, 1100, 1200, 1300]);
    // Action i is the one held while frame i was shown.
    let a: Vec<[f64; 3]> = log.actions.iter().map(|a| [a.steering, a.throttle, a.brake]).collect();
    assert_eq!(a, [[0.0, 0.0, 0.0], [0.5, 1.0, 0.0], [-0.25, 0.0, 1.0], [-0.25, 0.0, 1.0]]);
}

#[tokio::test]
async fn bad_actions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let id = start(&app).await;
    let act = format!("/session/{id}/action");
    let r = send(&app, "POST", &act, Some(json!({"t_ms": 5000, "steering": 0.0, "throttle": 0.0, "brake": 0.0}))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"], "invalid-argument");
    let r = send(&app, "POST", &act, Some(json!({"t_ms": 1000, "steering": "left"}))).await;
    assert!(r.status.is_client_error());
}

#[tokio::test]
async fn gaze_is_clamped_to_receipt_time_and_kept_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let (app, clock) = app(dir.path());
    let id = start(&app).await;
    let uri = format!("/session/{id}/gaze");
    clock.advance(200);

    let samples = json!({"samples": [
        {"t_ms": 1010, "x": 10.0, "y": 10.0},
        {"t_ms": 1030, "x": 11.0, "y": 10.0},
        {"t_ms": 1030, "x": 12.0, "y": 10.0},
        {"t_ms": 1020, "x": 13.0, "y": 10.0},
        {"t_ms": 1050, "x": 64.5, "y": 10.0},
        {"t_ms": 1070, "x": -1.0, "y": 10.0},
        {"t_ms": 9000, "x": 20.0, "y": 20.0},
    ]});
    let r = send(&app, "POST", &uri, Some(samples)).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json(), json!({"accepted": 3, "dropped": 4, "total": 3}));

    // The clamped sample took the receipt time, so nothing at or before it fits.
    let r = send(&app, "POST", &uri, Some(json!({"samples": [{"t_ms": 1200, "x": 1.0, "y": 1.0}]}))).await;
    assert_eq!(r.json()["accepted"], 0);
    clock.advance(20);
    let r = send(&app, "POST", &uri, Some(json!({"samples": [{"t_ms": 1210, "x": 1.0, "y": 1.0}]}))).await;
    assert_eq!(r.json()["total"], 4);

    let r = send(&app, "POST", &format!("/session/{id}/finish"), None).await;
    assert_eq!(r.json()["gaze_samples"], 4);
    assert_eq!(r.json()["dropped_gaze"], 5);
    let log = SessionLog::load(Path::new(r.json()["path"].as_str().unwrap())).unwrap();
    let t: Vec<u64> = log.gaze.iter().map(|g| g.t_ms).collect();
    assert_eq!(t, [1010, 1030, 1200, 1210]);
    assert_eq!((log.gaze[2].x, log.gaze[2].y), (20.0, 20.0));
}

#[tokio::test]
async fn unknown_sessions_are_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let r = send(&app, "GET", "/session/s0001/frame", None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.json()["error"], "not-found");

    let id = start(&app).await;
    assert_eq!(send(&app, "GET", "/session/nope/frame", None).await.status, StatusCode::NOT_FOUND);
    let fin = format!("/session/{id}/finish");
    assert_eq!(send(&app, "POST", &fin, None).await.status, StatusCode::OK);
    assert_eq!(send(&app, "POST", &fin, None).await.status, StatusCode::NOT_FOUND);
    let r = send(&app, "POST", &format!("/session/{id}/gaze"), Some(json!({"samples": []}))).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

/// Plays the capture UI for 30 s: frames and actions at 10 Hz, mouse at
/// 50 Hz flushed every 200 ms, every timestamp taken from the service.
#[tokio::test]
async fn thirty_second_session_feeds_gaze_prep() {
    let dir = tempfile::tempdir().unwrap();
    let (app, clock) = app(dir.path());
    let id = start(&app).await;
    let mut pending = Vec::new();
    let mut frame_t = 1000;
    for step in 1..=1500u64 {
        clock.advance(20);
        let now = 1000 + step * 20;
        pending.push(json!({"t_ms": now, "x": 10.0, "y": 10.0}));
        if step % 5 == 0 {
            let r = send(&app, "GET", &format!("/session/{id}/frame"), None).await;
            let t = r.t_ms.unwrap();
            assert!(t > frame_t);
            frame_t = t;
            let a = json!({"t_ms": now, "steering": 0.0, "throttle": 0.0, "brake": 0.0});
            send(&app, "POST", &format!("/session/{id}/action"), Some(a)).await;
        }
        if step % 10 == 0 {
            let batch = json!({"samples": std::mem::take(&mut pending)});
            let r = send(&app, "POST", &format!("/session/{id}/gaze"), Some(batch)).await;
            assert_eq!(r.json()["dropped"], 0);
        }
    }
    let r = send(&app, "POST", &format!("/session/{id}/finish"), None).await;
    let v = r.json();
    assert_eq!(v["frames"], 301);
    assert_eq!(v["gaze_samples"], 1500);
    assert_eq!(v["dropped_gaze"], 0);

    let path = Path::new(v["path"].as_str().unwrap());
    assert_eq!(path, dir.path().join(&id));
    let log = SessionLog::load(path).unwrap();
    assert_eq!(log.frames.len(), 301);
    assert_eq!(log.actions.len(), 301);
    assert_eq!(log.meta.source, "human");
    assert_eq!(log.meta.gaze_source, GazeSource::Human);
    assert!(log.gaze.windows(2).all(|w| w[0].t_ms < w[1].t_ms));
    assert!(log.gaze.iter().all(|g| (g.x, g.y) == (10.0, 10.0)));
    let span_s = (log.frames.last().unwrap().t_ms - log.frames[0].t_ms) as f64 / 1000.0;
    let rate = log.gaze.len() as f64 / span_s;
    assert!((rate - 50.0).abs() <= 5.0, "gaze rate {rate}");
    assert!(rate >= 3.0 * 10.0);

    let cfg = DatasetConfig {
        input_size: 32,
        target_size: 16,
        ..DatasetConfig::default()
    };
    let ds = build_dataset(&[log], &cfg).unwrap();
    assert!(ds.counts.originals > 290, "{:?}", ds.counts);
}
