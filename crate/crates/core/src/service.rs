//! HTTP contouring service over a directory of projects.
//!
//! Each project lives in `<data_dir>/<id>/` and is loaded on first access.
//! Reads work on immutable snapshots; mutations (strokes, interpolation,
//! event appends, pose) hold the project's write lock, so they are applied
//! one at a time in a single total order. Every mask change bumps `maskVersion`.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{Mutex, RwLock};

use crate::annotate::{BrushStroke, ContourSet, LabelVolume};
use crate::error::Error;
use crate::geom::{Pose, Vec3};
use crate::metrics::{dsc, summarize, EventKind, SessionEvent, SessionRecord};
use crate::render::{encode_png_rgba, render_image, slice_rgba, Camera, RenderSettings, Rgba, TransferFunction};
use crate::store::{
    append_events, apply_event, load_project, read_project_file, ProjectFile, REFERENCE_MASK, USER_MASK,
};
use crate::volume::{Axis, DensityWindow, Volume};

pub const DEFAULT_PORT: u16 = 8080;

/// `serve` configuration file: `{"port": 8080, "dataDir": "data"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ServiceConfig {
    pub port: u16,
    pub data_dir: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { port: DEFAULT_PORT, data_dir: PathBuf::from("data") }
    }
}

impl ServiceConfig {
    pub fn load(path: impl AsRef<Path>) -> crate::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::corrupt(path, "config", e.to_string()))
    }

    /// Applies `PORT` and `DATA_DIR` from the given lookup.
    pub fn with_env(mut self, var: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        if let Some(p) = var("PORT") {
            self.port = p.parse().map_err(|e| format!("PORT={p}: {e}"))?;
        }
        if let Some(d) = var("DATA_DIR") {
            self.data_dir = PathBuf::from(d);
        }
        Ok(self)
    }
}

/// JSON error body `{error, field}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub error: String,
    pub field: Option<String>,
    pub extra: Option<(String, Value)>,
}

impl ApiError {
    fn bad(field: &str, error: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, error: error.into(), field: Some(field.into()), extra: None }
    }

    fn not_found(error: impl Into<String>) -> Self {
        ApiError { status: StatusCode::NOT_FOUND, error: error.into(), field: None, extra: None }
    }

    fn internal(error: impl Into<String>) -> Self {
        ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, error: error.into(), field: None, extra: None }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => StatusCode::NOT_FOUND,
            Error::Io { .. } | Error::Png(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError { status, field: e.field().map(str::to_string), error: e.to_string(), extra: None }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.error, "field": self.field });
        if let Some((k, v)) = self.extra {
            body[k] = v;
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Mutable state of one loaded project. Large parts sit behind `Arc` so that
/// readers can keep a snapshot while a writer proceeds.
#[derive(Clone)]
struct Live {
    meta: ProjectFile,
    volume: Arc<Volume>,
    masks: BTreeMap<String, Arc<LabelVolume>>,
    tf: Arc<TransferFunction>,
    session: Arc<SessionRecord>,
    version: u64,
}

struct Slot {
    dir: PathBuf,
    live: RwLock<Live>,
}

#[derive(Clone)]
pub struct AppState {
    data_dir: PathBuf,
    projects: Arc<Mutex<HashMap<String, Arc<Slot>>>>,
}

impl AppState {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        AppState { data_dir: data_dir.into(), projects: Arc::default() }
    }

    async fn slot(&self, id: &str) -> ApiResult<Arc<Slot>> {
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) || id.starts_with('.') {
            return Err(ApiError::not_found(format!("no project {id:?}")));
        }
        let mut projects = self.projects.lock().await;
        if let Some(s) = projects.get(id) {
            return Ok(s.clone());
        }
        let dir = self.data_dir.join(id);
        let loaded = blocking(move || {
            let (dir, meta) = read_project_file(&dir)?;
            let p = load_project(&dir)?;
            Ok::<_, Error>((dir, meta, p))
        })
        .await?
        .map_err(|e| match e {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                ApiError::not_found(format!("no project {id:?}"))
            }
            other => other.into(),
        })?;
        let (dir, meta, p) = loaded;
        let live = Live {
            meta,
            volume: Arc::new(p.volume),
            masks: p.masks.into_iter().map(|(k, v)| (k, Arc::new(v))).collect(),
            tf: Arc::new(p.transfer_function),
            session: Arc::new(p.session),
            version: 0,
        };
        let slot = Arc::new(Slot { dir, live: RwLock::new(live) });
        projects.insert(id.to_string(), slot.clone());
        Ok(slot)
    }

    async fn snapshot(&self, id: &str) -> ApiResult<Live> {
        let slot = self.slot(id).await?;
        let live = slot.live.read().await;
        Ok(live.clone())
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/slice", get(get_slice))
        .route("/projects/{id}/render", get(get_render))
        .route("/projects/{id}/stroke", post(post_stroke))
        .route("/projects/{id}/interp", post(post_interp))
        .route("/projects/{id}/dsc", get(get_dsc))
        .route("/projects/{id}/metrics", get(get_metrics))
        .route("/projects/{id}/pose", post(post_pose))
        .route("/projects/{id}/contours", get(get_contours))
        .route("/projects/{id}/session/events", post(post_events))
        .route("/projects/{id}/session", get(get_session))
        .with_state(state)
}

/// Binds `0.0.0.0:<port>` and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", config.port)).await?;
    tracing::info!(addr = %listener.local_addr()?, data_dir = %config.data_dir.display(), "serving");
    axum::serve(listener, router(AppState::new(config.data_dir)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

type Params = Query<HashMap<String, String>>;

fn param<T: FromStr>(q: &HashMap<String, String>, name: &str) -> ApiResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    q.get(name).map(|s| s.parse::<T>().map_err(|e| ApiError::bad(name, format!("{name}: {e}")))).transpose()
}

fn required<T: FromStr>(q: &HashMap<String, String>, name: &str) -> ApiResult<T>
where
    T::Err: std::fmt::Display,
{
    param(q, name)?.ok_or_else(|| ApiError::bad(name, format!("missing query parameter `{name}`")))
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

fn parse_body(body: &Bytes) -> ApiResult<Value> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad("body", format!("invalid JSON: {e}")))
}

fn user_mask(live: &Live) -> Arc<LabelVolume> {
    live.masks.get(USER_MASK).cloned().unwrap_or_else(|| Arc::new(LabelVolume::for_volume(&live.volume)))
}

async fn get_project(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let live = st.snapshot(&id).await?;
    let v = &live.volume;
    Ok(Json(json!({
        "id": live.meta.id,
        "dims": v.dims(),
        "spacingMm": v.spacing(),
        "rawRange": [v.raw_range().0, v.raw_range().1],
        "window": live.meta.window,
        "pose": live.meta.pose,
        "masks": live.masks.keys().collect::<Vec<_>>(),
        "transferFunction": *live.tf,
        "maskVersion": live.version,
        "sessionEvents": live.session.events.len(),
    })))
}

async fn get_slice(State(st): State<AppState>, UrlPath(id): UrlPath<String>, Query(q): Params) -> ApiResult<Response> {
    let live = st.snapshot(&id).await?;
    let axis: Axis = required(&q, "axis")?;
    let index: usize = required(&q, "index")?;
    let window = param::<DensityWindow>(&q, "window")?.unwrap_or(live.meta.window);
    let tint = param::<Rgba>(&q, "tint")?.unwrap_or(RenderSettings::default().label_tint);
    let name = q.get("mask").map(String::as_str).unwrap_or(USER_MASK);
    let mask = live.masks.get(name).cloned().ok_or_else(|| ApiError::bad("mask", format!("no mask {name:?}")))?;
    let bytes = blocking(move || {
        let slice = live.volume.extract_slice(axis, index)?;
        let m = mask.mask_slice(axis, index)?;
        encode_png_rgba(slice.width, slice.height, &slice_rgba(&slice, Some(&m), window, tint))
    })
    .await??;
    Ok(png(bytes))
}

/// Camera from `cam=px,py,pz,tx,ty,tz,ux,uy,uz,W,H,worldWidth`, or an orbit
/// around the volume center from `az`, `el` (degrees), `w`, `h`, `worldWidth`.
fn camera_from(q: &HashMap<String, String>, v: &Volume) -> ApiResult<Camera> {
    if let Some(cam) = param::<Camera>(q, "cam")? {
        return Ok(cam);
    }
    let az = param(q, "az")?.unwrap_or(30.0);
    let el = param(q, "el")?.unwrap_or(25.0);
    let w = param(q, "w")?.unwrap_or(256);
    let h = param(q, "h")?.unwrap_or(w);
    let world_width = param(q, "worldWidth")?;
    Camera::framing(Vec3::from(v.center_mm()), v.extent_mm(), az, el, (w, h), world_width)
        .map_err(|e| ApiError::bad("cam", e.to_string()))
}

async fn get_render(State(st): State<AppState>, UrlPath(id): UrlPath<String>, Query(q): Params) -> ApiResult<Response> {
    let live = st.snapshot(&id).await?;
    let window = param::<DensityWindow>(&q, "window")?.unwrap_or(live.meta.window);
    let camera = camera_from(&q, &live.volume)?;
    let mut settings = RenderSettings { pose: live.meta.pose, ..Default::default() };
    if let Some(steps) = param::<usize>(&q, "steps")? {
        if steps == 0 {
            return Err(ApiError::bad("steps", "steps must be positive"));
        }
        settings.steps = steps;
    }
    if let Some(t) = param::<Rgba>(&q, "tint")? {
        settings.label_tint = t;
    }
    let labels = user_mask(&live);
    let bytes = blocking(move || {
        render_image(&live.volume, Some(&labels), &live.tf, window, &camera, settings).and_then(|f| f.to_png())
    })
    .await??;
    Ok(png(bytes))
}

fn version_conflict(current: u64) -> ApiError {
    ApiError {
        status: StatusCode::CONFLICT,
        error: "mask version conflict; refresh and retry".into(),
        field: Some("maskVersion".into()),
        extra: Some(("maskVersion".into(), json!(current))),
    }
}

fn expected_version(body: &Value) -> ApiResult<Option<u64>> {
    match body.get("maskVersion") {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v.as_u64().map(Some).ok_or_else(|| ApiError::bad("maskVersion", "maskVersion must be an integer")),
    }
}

/// Under the write lock: validates `events` (built from the last logged
/// time), applies the mask-changing ones to the user mask, persists mask and
/// log, and returns the mask version. Nothing is written if any event fails.
async fn mutate(
    slot: Arc<Slot>,
    expected: Option<u64>,
    events: impl FnOnce(f64) -> Vec<SessionEvent> + Send + 'static,
) -> ApiResult<u64> {
    let mut live = slot.live.write().await;
    if let Some(v) = expected {
        if v != live.version {
            return Err(version_conflict(live.version));
        }
    }
    let last_t = live.session.events.last().map_or(0.0, |e| e.t);
    let events = events(last_t);
    let mut probe = SessionRecord { events: live.session.events.clone() };
    for (i, ev) in events.iter().enumerate() {
        probe.check_next(ev).map_err(|reason| {
            let mut err = ApiError::bad("event", format!("event {}: {reason}", i + 1));
            err.extra = Some(("line".into(), json!(i + 1)));
            err
        })?;
        probe.events.push(ev.clone());
    }
    let snapshot = live.clone();
    let dir = slot.dir.clone();
    let (mask, session, changed) = blocking(move || -> crate::Result<_> {
        let mut mask = user_mask(&snapshot);
        let mut changed = false;
        for ev in &events {
            if matches!(ev.kind, EventKind::StrokeEnd { stroke: Some(_) } | EventKind::Interp { .. }) {
                apply_event(Arc::make_mut(&mut mask), &snapshot.volume, &ev.kind)?;
                changed = true;
            }
        }
        if changed {
            let rel = snapshot.meta.masks.get(USER_MASK).cloned().unwrap_or_else(|| "masks/user.mask.json".into());
            if let Some(parent) = dir.join(&rel).parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            crate::store::write_atomic(&dir.join(&rel), mask.to_mask_json().as_bytes())?;
            if !snapshot.meta.masks.contains_key(USER_MASK) {
                let mut meta = snapshot.meta.clone();
                meta.masks.insert(USER_MASK.into(), rel);
                meta.save(&dir)?;
            }
        }
        append_events(dir.join(&snapshot.meta.session), &events)?;
        let mut session = snapshot.session.clone();
        Arc::make_mut(&mut session).events.extend(events);
        Ok((mask, session, changed))
    })
    .await??;
    if changed && !live.meta.masks.contains_key(USER_MASK) {
        live.meta.masks.insert(USER_MASK.into(), "masks/user.mask.json".into());
    }
    live.masks.insert(USER_MASK.into(), mask);
    live.session = session;
    if changed {
        live.version += 1;
    }
    Ok(live.version)
}

async fn post_stroke(State(st): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let slot = st.slot(&id).await?;
    let body = parse_body(&body)?;
    let expected = expected_version(&body)?;
    let stroke: BrushStroke = serde_json::from_value(body).map_err(|e| ApiError::bad("stroke", e.to_string()))?;
    let version = mutate(slot, expected, move |last| {
        let t = stroke.timestamp.max(last);
        vec![
            SessionEvent::new(t, EventKind::StrokeStart),
            SessionEvent::new(t, EventKind::StrokeEnd { stroke: Some(stroke) }),
        ]
    })
    .await?;
    Ok(Json(json!({ "maskVersion": version })))
}

#[derive(Deserialize)]
struct InterpRequest {
    axis: Axis,
    keys: Vec<usize>,
}

async fn post_interp(State(st): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let slot = st.slot(&id).await?;
    let body = parse_body(&body)?;
    let expected = expected_version(&body)?;
    let req: InterpRequest = serde_json::from_value(body).map_err(|e| ApiError::bad("keys", e.to_string()))?;
    let version = mutate(slot, expected, move |last| {
        vec![SessionEvent::new(last, EventKind::Interp { axis: req.axis, keys: req.keys })]
    })
    .await?;
    Ok(Json(json!({ "maskVersion": version })))
}

async fn get_dsc(State(st): State<AppState>, UrlPath(id): UrlPath<String>, Query(q): Params) -> ApiResult<Json<Value>> {
    let live = st.snapshot(&id).await?;
    let against = q.get("against").map(String::as_str).unwrap_or(REFERENCE_MASK).to_string();
    let other =
        live.masks.get(&against).cloned().ok_or_else(|| ApiError::bad("against", format!("no mask {against:?}")))?;
    let user = user_mask(&live);
    let d = blocking(move || dsc(&user, &other)).await??;
    Ok(Json(json!({ "dsc": d, "against": against })))
}

async fn get_metrics(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let live = st.snapshot(&id).await?;
    let reference = live.masks.get(REFERENCE_MASK).cloned();
    let user = user_mask(&live);
    let summary = blocking(move || {
        let d = reference.map(|r| dsc(&user, &r)).transpose()?;
        summarize(&live.session, d)
    })
    .await??;
    Ok(Json(serde_json::to_value(summary).expect("summary serializes")))
}

async fn post_pose(State(st): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<Pose>> {
    let slot = st.slot(&id).await?;
    let body = parse_body(&body)?;
    let pose: Pose = serde_json::from_value(body).map_err(|e| ApiError::bad("pose", e.to_string()))?;
    let mut live = slot.live.write().await;
    let mut meta = live.meta.clone();
    meta.pose = pose;
    let dir = slot.dir.clone();
    let saved = meta.clone();
    blocking(move || saved.save(&dir)).await??;
    live.meta = meta;
    Ok(Json(pose))
}

async fn get_contours(State(st): State<AppState>, UrlPath(id): UrlPath<String>, Query(q): Params) -> ApiResult<Json<Value>> {
    let live = st.snapshot(&id).await?;
    let axis: Axis = param(&q, "axis")?.unwrap_or(Axis::Transverse);
    let user = user_mask(&live);
    let spacing = live.volume.spacing();
    let set = blocking(move || ContourSet::extract(&user, spacing, axis)).await??;
    Ok(Json(json!({ "axis": axis, "contours": set.to_records() })))
}

async fn post_events(State(st): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let slot = st.slot(&id).await?;
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad("body", "body is not UTF-8"))?;
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ev: SessionEvent = serde_json::from_str(line).map_err(|e| {
            let mut err = ApiError::bad("event", format!("line {}: {e}", i + 1));
            err.extra = Some(("line".into(), json!(i + 1)));
            err
        })?;
        events.push(ev);
    }
    let n = events.len();
    let version = mutate(slot.clone(), None, move |_| events).await?;
    let total = slot.live.read().await.session.events.len();
    Ok(Json(json!({ "appended": n, "events": total, "maskVersion": version })))
}

async fn get_session(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let live = st.snapshot(&id).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], live.session.to_jsonl()).into_response())
}
