//! HTTP front end. One engine thread owns the [`Plane`] and applies
//! mutations in arrival order; handlers read from the last published copy.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::path::Path;
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::{oneshot, watch};

use super::{Actor, Command, ControlError, FaultSpec, Plane, Role};
use crate::inventory::InventoryDb;
use crate::simcore::SimTime;
use crate::topology::PortRef;

pub const TOKEN_FILE_ENV: &str = "CAMPUSNET_TOKEN_FILE";

/// Bearer tokens, one per line: `<token> <role> [actor]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Tokens(BTreeMap<String, Actor>);

impl Tokens {
    pub fn parse(text: &str) -> Result<Tokens, String> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let w: Vec<&str> = line.split_whitespace().collect();
            let (token, role, name) = match w.as_slice() {
                [t, r] => (*t, *r, *r),
                [t, r, n] => (*t, *r, *n),
                _ => return Err(format!("line {}: expected `<token> <role> [actor]`", i + 1)),
            };
            let role: Role = role.parse().map_err(|e| format!("line {}: {e}", i + 1))?;
            if map.insert(token.to_string(), Actor::new(name, role)).is_some() {
                return Err(format!("line {}: duplicate token", i + 1));
            }
        }
        Ok(Tokens(map))
    }

    pub fn load(path: &Path) -> Result<Tokens, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Tokens::parse(&text)
    }

    pub fn actor(&self, token: &str) -> Option<&Actor> {
        self.0.get(token)
    }
}

/// Runs against the plane and hands back the reply, sent once the new
/// snapshot is published.
type Job = Box<dyn FnOnce(&mut Plane) -> Box<dyn FnOnce() + Send> + Send>;

/// Handle on the engine thread. Cheap to clone.
#[derive(Clone)]
pub struct Engine {
    jobs: mpsc::Sender<Job>,
    latest: watch::Receiver<Arc<Plane>>,
}

impl Engine {
    /// With `realtime` set, simulated time follows the wall clock, checked
    /// at that interval. Without it time only moves when told to.
    pub fn spawn(plane: Plane, realtime: Option<Duration>) -> Engine {
        let (jobs, rx) = mpsc::channel::<Job>();
        let (publish, latest) = watch::channel(Arc::new(plane.clone()));
        std::thread::Builder::new()
            .name("campusnet-engine".into())
            .spawn(move || {
                let mut plane = plane;
                let start = Instant::now();
                let base = plane.now();
                loop {
                    let got = match realtime {
                        Some(tick) => rx.recv_timeout(tick),
                        None => rx.recv().map_err(|_| mpsc::RecvTimeoutError::Disconnected),
                    };
                    let mut reply = None;
                    match got {
                        Ok(job) => reply = Some(job(&mut plane)),
                        Err(mpsc::RecvTimeoutError::Timeout) => {}
                        Err(mpsc::RecvTimeoutError::Disconnected) => break,
                    }
                    if realtime.is_some() {
                        let wall = SimTime::from_nanos(start.elapsed().as_nanos() as u64);
                        if base + wall > plane.now() {
                            plane.advance_to(base + wall);
                        }
                    }
                    publish.send_replace(Arc::new(plane.clone()));
                    if let Some(r) = reply {
                        r();
                    }
                }
            })
            .expect("spawn engine thread");
        Engine { jobs, latest }
    }

    /// Queues `f` behind every earlier mutation and waits for its result.
    pub async fn run<T: Send + 'static>(&self, f: impl FnOnce(&mut Plane) -> T + Send + 'static) -> T {
        let (tx, rx) = oneshot::channel();
        let job: Job = Box::new(move |p| {
            let out = f(p);
            Box::new(move || {
                let _ = tx.send(out);
            })
        });
        self.jobs.send(job).expect("engine thread alive");
        rx.await.expect("engine thread alive")
    }

    pub fn snapshot(&self) -> Arc<Plane> {
        self.latest.borrow().clone()
    }
}

#[derive(Clone)]
pub struct AppState {
    pub engine: Engine,
    pub tokens: Arc<Tokens>,
}

#[derive(Debug)]
pub enum ApiError {
    Unauthorized,
    BadRequest(String),
    Control(ControlError),
}

impl From<ControlError> for ApiError {
    fn from(e: ControlError) -> Self {
        ApiError::Control(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind, msg) = match self {
            ApiError::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized", "missing or unknown bearer token".to_string()),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "bad_request", m),
            ApiError::Control(e) => match &e {
                ControlError::Forbidden { .. } => (StatusCode::FORBIDDEN, "forbidden", e.to_string()),
                ControlError::TargetUnknown(_) => (StatusCode::NOT_FOUND, "target_unknown", e.to_string()),
                ControlError::ValidationFailed(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation_failed", e.to_string()),
            },
        };
        (status, Json(json!({ "error": kind, "message": msg }))).into_response()
    }
}

fn actor(state: &AppState, headers: &HeaderMap) -> Result<Actor, ApiError> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or(ApiError::Unauthorized)?;
    state.tokens.actor(token.trim()).cloned().ok_or(ApiError::Unauthorized)
}

fn idem_key(headers: &HeaderMap) -> Option<String> {
    headers.get("idempotency-key").and_then(|v| v.to_str().ok()).map(str::to_string)
}

async fn mutate(state: &AppState, headers: &HeaderMap, cmd: Command) -> Result<Json<Value>, ApiError> {
    let who = actor(state, headers)?;
    let key = idem_key(headers);
    let v = state.engine.run(move |p| p.execute(&who, cmd, key.as_deref())).await?;
    Ok(Json(v))
}

fn port_ref(s: &str) -> Result<PortRef, ApiError> {
    s.parse().map_err(|e: String| ApiError::BadRequest(e))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/topology", get(get_topology))
        .route("/ports", get(get_ports))
        .route("/ports/{port}/vlan", post(post_vlan))
        .route("/ports/{port}/clear-sticky", post(post_clear_sticky))
        .route("/quarantine", post(post_quarantine))
        .route("/quarantine/{host}", delete(delete_quarantine))
        .route("/ghost-sessions", post(post_ghost))
        .route("/ghost-sessions/{id}", delete(delete_ghost))
        .route("/faults", post(post_fault))
        .route("/events", get(get_events))
        .route("/views/{name}", get(get_view))
        .route("/reports/blocked", get(get_blocked))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn get_topology(State(s): State<AppState>, h: HeaderMap) -> Result<Json<Value>, ApiError> {
    let who = actor(&s, &h)?;
    Ok(Json(s.engine.snapshot().topology(&who)?))
}

#[derive(Deserialize)]
struct PortsQuery {
    switch: Option<String>,
}

async fn get_ports(State(s): State<AppState>, h: HeaderMap, Query(q): Query<PortsQuery>) -> Result<Json<Value>, ApiError> {
    let who = actor(&s, &h)?;
    Ok(Json(s.engine.snapshot().ports(&who, q.switch.as_deref())?))
}

#[derive(Deserialize)]
struct VlanBody {
    vlan: u16,
}

async fn post_vlan(
    State(s): State<AppState>,
    h: HeaderMap,
    UrlPath(port): UrlPath<String>,
    Json(b): Json<VlanBody>,
) -> Result<Json<Value>, ApiError> {
    let port = port_ref(&port)?;
    mutate(&s, &h, Command::MovePortVlan { port, vlan: b.vlan }).await
}

async fn post_clear_sticky(State(s): State<AppState>, h: HeaderMap, UrlPath(port): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let port = port_ref(&port)?;
    mutate(&s, &h, Command::ClearSticky { port }).await
}

#[derive(Deserialize)]
struct QuarantineBody {
    host: String,
    reason: String,
}

async fn post_quarantine(State(s): State<AppState>, h: HeaderMap, Json(b): Json<QuarantineBody>) -> Result<Json<Value>, ApiError> {
    mutate(&s, &h, Command::Quarantine { host: b.host, reason: b.reason }).await
}

async fn delete_quarantine(State(s): State<AppState>, h: HeaderMap, UrlPath(host): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    mutate(&s, &h, Command::Unquarantine { host }).await
}

#[derive(Deserialize)]
struct GhostBody {
    manifest: String,
    /// Starts distribution straight away when given.
    image_bytes: Option<u64>,
}

async fn post_ghost(State(s): State<AppState>, h: HeaderMap, Json(b): Json<GhostBody>) -> Result<Json<Value>, ApiError> {
    let mut v = mutate(&s, &h, Command::StartGhost { manifest: b.manifest }).await?.0;
    if let Some(bytes) = b.image_bytes {
        let id = v["session"].as_u64().unwrap_or_default() as u32;
        let run = mutate(&s, &h, Command::RunGhost { id, image_bytes: bytes }).await?.0;
        v["chunks"] = run["chunks"].clone();
    }
    Ok(Json(v))
}

async fn delete_ghost(State(s): State<AppState>, h: HeaderMap, UrlPath(id): UrlPath<u32>) -> Result<Json<Value>, ApiError> {
    mutate(&s, &h, Command::TeardownGhost { id }).await
}

#[derive(Deserialize)]
struct FaultBody {
    fault: FaultSpec,
}

async fn post_fault(State(s): State<AppState>, h: HeaderMap, Json(b): Json<FaultBody>) -> Result<Json<Value>, ApiError> {
    mutate(&s, &h, Command::InjectFault { fault: b.fault }).await
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: usize,
    #[serde(default)]
    follow: bool,
}

async fn get_events(State(s): State<AppState>, h: HeaderMap, Query(q): Query<EventsQuery>) -> Result<Response, ApiError> {
    let who = actor(&s, &h)?;
    let (first, next) = s.engine.snapshot().events_ndjson(&who, q.since)?;
    let ndjson = [(header::CONTENT_TYPE, "application/x-ndjson")];
    if !q.follow {
        return Ok((ndjson, first).into_response());
    }
    let rx = s.engine.latest.clone();
    let stream = futures::stream::unfold((Some(first), next, rx, who), |(pending, cursor, mut rx, who)| async move {
        if let Some(chunk) = pending {
            return Some((Ok::<_, Infallible>(chunk), (None, cursor, rx, who)));
        }
        loop {
            rx.changed().await.ok()?;
            let plane = rx.borrow_and_update().clone();
            let (chunk, next) = plane.events_ndjson(&who, cursor).ok()?;
            if !chunk.is_empty() {
                return Some((Ok(chunk), (None, next, rx, who)));
            }
        }
    });
    Ok((ndjson, Body::from_stream(stream)).into_response())
}

#[derive(Deserialize)]
struct ViewQuery {
    #[serde(default)]
    filter: String,
    #[serde(default)]
    format: Option<String>,
}

async fn get_view(
    State(s): State<AppState>,
    h: HeaderMap,
    UrlPath(name): UrlPath<String>,
    Query(q): Query<ViewQuery>,
) -> Result<Response, ApiError> {
    let who = actor(&s, &h)?;
    let rows = s.engine.snapshot().query(&who, &name, &q.filter)?;
    Ok(match q.format.as_deref() {
        Some("text") => InventoryDb::render(&rows).into_response(),
        _ => Json(rows).into_response(),
    })
}

async fn get_blocked(State(s): State<AppState>, h: HeaderMap) -> Result<String, ApiError> {
    let who = actor(&s, &h)?;
    Ok(s.engine.snapshot().blocked_report(&who)?)
}
