use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use campusnet::campus::{demo_world, WorldConfig};
use campusnet::control::api::{router, AppState, Engine, Tokens};
use campusnet::control::Plane;
use campusnet::simcore::SimTime;

const TOKENS: &str = "\
# token role actor
t-admin netadmin admnusr
t-desk servicedesk helpdesk
t-img desktop imaging
";

fn app() -> (Router, Engine) {
    let mut w = demo_world(WorldConfig::fast()).unwrap();
    w.converge().unwrap();
    w.run_for(SimTime::from_secs(2));
    let engine = Engine::spawn(Plane::new(w), None);
    let state = AppState { engine: engine.clone(), tokens: Arc::new(Tokens::parse(TOKENS).unwrap()) };
    (router(state), engine)
}

async fn call(app: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<Value>, key: Option<&str>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    if let Some(k) = key {
        req = req.header("idempotency-key", k);
    }
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn json_of(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|e| panic!("{e}: {s}"))
}

async fn audit_len(app: &Router) -> usize {
    let (st, body) = call(app, "GET", "/views/audit", Some("t-admin"), None, None).await;
    assert_eq!(st, StatusCode::OK, "{body}");
    json_of(&body).as_array().unwrap().len()
}

#[tokio::test]
async fn missing_or_unknown_token_is_unauthorized() {
    let (app, _) = app();
    assert_eq!(call(&app, "GET", "/topology", None, None, None).await.0, StatusCode::UNAUTHORIZED);
    let (st, body) = call(&app, "GET", "/topology", Some("nope"), None, None).await;
    assert_eq!(st, StatusCode::UNAUTHORIZED);
    assert_eq!(json_of(&body)["error"], "unauthorized");
}

#[tokio::test]
async fn topology_and_ports_read_the_snapshot() {
    let (app, _) = app();
    let (st, body) = call(&app, "GET", "/topology", Some("t-desk"), None, None).await;
    assert_eq!(st, StatusCode::OK);
    assert!(body.contains("BigSwitch1"));
    let (st, body) = call(&app, "GET", "/ports?switch=A11", Some("t-desk"), None, None).await;
    assert_eq!(st, StatusCode::OK);
    let ports = json_of(&body);
    assert!(ports.as_array().unwrap().iter().all(|p| p["port"].as_str().unwrap().starts_with("A11:")));
    let (st, body) = call(&app, "GET", "/ports?switch=Z99", Some("t-desk"), None, None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(json_of(&body)["error"], "target_unknown");
}

#[tokio::test]
async fn vlan_move_is_audited_once_and_idempotent() {
    let (app, engine) = app();
    let n0 = audit_len(&app).await;
    let uri = "/ports/A11:1%2F0%2F40/vlan";
    let (st, first) = call(&app, "POST", uri, Some("t-admin"), Some(json!({"vlan": 901})), Some("mv-1")).await;
    assert_eq!(st, StatusCode::OK, "{first}");
    let (st, again) = call(&app, "POST", uri, Some("t-admin"), Some(json!({"vlan": 901})), Some("mv-1")).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(first, again);
    let plane = engine.snapshot();
    let port = "A11:1/0/40".parse().unwrap();
    assert_eq!(plane.world.fabric.port(&port).unwrap().mode.access_vlan().map(|v| v.get()), Some(901));
    let moves = plane.inventory.audit.iter().filter(|a| a.command == "move_port_vlan").collect::<Vec<_>>();
    assert_eq!(moves.iter().filter(|a| a.outcome == "ok").count(), 1);
    assert_eq!(audit_len(&app).await, n0 + 2);
}

#[tokio::test]
async fn roles_map_to_forbidden() {
    let (app, _) = app();
    let (st, body) = call(&app, "POST", "/quarantine", Some("t-desk"), Some(json!({"host": "machine42", "reason": "worm"})), None).await;
    assert_eq!(st, StatusCode::FORBIDDEN);
    assert_eq!(json_of(&body)["error"], "forbidden");
    let (st, _) = call(&app, "POST", "/faults", Some("t-img"), Some(json!({"fault": "ups-fail upsA"})), None).await;
    assert_eq!(st, StatusCode::FORBIDDEN);
    let (st, _) = call(&app, "GET", "/views/audit", Some("t-desk"), None, None).await;
    assert_eq!(st, StatusCode::FORBIDDEN);
    let (st, _) = call(&app, "POST", "/ports/A11:1%2F0%2F10/clear-sticky", Some("t-desk"), None, None).await;
    assert_eq!(st, StatusCode::OK);
}

#[tokio::test]
async fn validation_and_unknown_targets() {
    let (app, _) = app();
    let (st, body) = call(&app, "POST", "/ports/A11:1%2F0%2F40/vlan", Some("t-admin"), Some(json!({"vlan": 4095})), None).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    assert_eq!(json_of(&body)["error"], "validation_failed");
    let (st, _) = call(&app, "POST", "/ports/Z9:1%2F0%2F1/clear-sticky", Some("t-admin"), None, None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "POST", "/ports/garbage/clear-sticky", Some("t-admin"), None, None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = call(&app, "DELETE", "/quarantine/machine42", Some("t-admin"), None, None).await;
    assert_ne!(st, StatusCode::OK);
    let (st, _) = call(&app, "GET", "/views/nonsense", Some("t-admin"), None, None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn quarantine_round_trip_recompiles() {
    let (app, engine) = app();
    let v0 = engine.snapshot().world.ruleset_version();
    let (st, body) = call(&app, "POST", "/quarantine", Some("t-admin"), Some(json!({"host": "machine42", "reason": "worm"})), None).await;
    assert_eq!(st, StatusCode::OK, "{body}");
    assert!(engine.snapshot().world.ruleset_version() > v0);
    let (st, body) = call(&app, "GET", "/views/quarantine_view?format=text", Some("t-desk"), None, None).await;
    assert_eq!(st, StatusCode::OK);
    assert!(body.contains("machine42"), "{body}");
    let (st, _) = call(&app, "DELETE", "/quarantine/machine42", Some("t-admin"), None, None).await;
    assert_eq!(st, StatusCode::OK);
}

#[tokio::test]
async fn ghost_sessions_start_and_stop() {
    let (app, engine) = app();
    let manifest = "analyst imaging\nvlan 3001\nserver ghostsrv\nport A11:1/0/40\n";
    let (st, body) = call(&app, "POST", "/ghost-sessions", Some("t-img"), Some(json!({"manifest": manifest, "image_bytes": 1_000_000})), None).await;
    assert_eq!(st, StatusCode::OK, "{body}");
    let v = json_of(&body);
    assert_eq!(v["session"], 1);
    assert!(v["chunks"].as_u64().unwrap() > 0);
    assert_eq!(engine.snapshot().world.ghosts.active().count(), 1);
    let (st, _) = call(&app, "DELETE", "/ghost-sessions/1", Some("t-img"), None, None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(engine.snapshot().world.ghosts.active().count(), 0);
    let (st, _) = call(&app, "DELETE", "/ghost-sessions/99", Some("t-img"), None, None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn faults_and_blocked_report() {
    let (app, _) = app();
    let (st, before) = call(&app, "GET", "/reports/blocked", Some("t-desk"), None, None).await;
    assert_eq!(st, StatusCode::OK);
    assert!(before.contains("sickhost"), "{before}");
    let (st, body) = call(&app, "POST", "/faults", Some("t-admin"), Some(json!({"fault": "ups-fail upsA"})), None).await;
    assert_eq!(st, StatusCode::OK, "{body}");
    let (st, _) = call(&app, "POST", "/faults", Some("t-admin"), Some(json!({"fault": "melt everything"})), None).await;
    assert!(st.is_client_error());
}

#[tokio::test]
async fn events_are_ndjson_from_a_cursor() {
    let (app, engine) = app();
    let total = engine.snapshot().world.log().len();
    let (st, body) = call(&app, "GET", "/events?since=0", Some("t-desk"), None, None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(body.lines().count(), total);
    let last: Value = json_of(body.lines().last().unwrap());
    assert_eq!(last["cursor"], total - 1);
    let (_, tail) = call(&app, "GET", &format!("/events?since={}", total - 2), Some("t-desk"), None, None).await;
    assert_eq!(tail.lines().count(), 2);
}

#[tokio::test]
async fn follow_streams_new_events() {
    let (app, engine) = app();
    let total = engine.snapshot().world.log().len();
    let req = Request::get(format!("/events?since={total}&follow=true"))
        .header("authorization", "Bearer t-admin")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let mut body = resp.into_body();
    let (st, _) = call(&app, "POST", "/quarantine", Some("t-admin"), Some(json!({"host": "machine43", "reason": "scan"})), None).await;
    assert_eq!(st, StatusCode::OK);
    let mut seen = String::new();
    while !seen.contains("quarantine") {
        let frame = tokio::time::timeout(std::time::Duration::from_secs(5), body.frame()).await.unwrap().unwrap().unwrap();
        if let Ok(data) = frame.into_data() {
            seen.push_str(std::str::from_utf8(&data).unwrap());
        }
    }
    assert!(seen.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));
}
