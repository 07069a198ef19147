use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use contourkit::annotate::{BrushMode, BrushStroke, LabelVolume};
use contourkit::metrics::SessionRecord;
use contourkit::phantom::Phantom;
use contourkit::render::decode_png;
use contourkit::service::{router, AppState, ServiceConfig};
use contourkit::store::{load_project, mask_hash, replay_session, save_project, Project};
use contourkit::volume::Axis;

fn fixture(root: &Path) -> Project {
    let ph = Phantom::ellipsoid([20, 18, 12], [1.0, 1.0, 2.0], [6.0, 5.0, 8.0]).unwrap();
    let p = Project::new("demo", ph.volume).with_reference(ph.reference);
    save_project(root.join("demo"), &p).unwrap();
    p
}

fn service_at(root: &Path) -> Router {
    router(AppState::new(root))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b)).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body.map(|b| b.to_string())).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn disc(slice: usize, center: [f64; 2], radius: f64) -> Value {
    serde_json::to_value(BrushStroke::disc(Axis::Transverse, slice, vec![center], radius, BrushMode::Paint)).unwrap()
}

#[tokio::test]
async fn project_summary_and_missing_projects() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let app = service_at(tmp.path());
    let (status, body) = call_json(&app, "GET", "/projects/demo", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["dims"], json!([20, 18, 12]));
    assert_eq!(body["maskVersion"], 0);
    assert_eq!(body["masks"], json!(["reference", "user"]));

    for uri in ["/projects/nope", "/projects/..%2Fdemo", "/projects/.hidden/slice?axis=z&index=0"] {
        let (status, body) = call_json(&app, "GET", uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert!(body["error"].is_string());
    }
}

#[tokio::test]
async fn slice_and_render_return_png() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let app = service_at(tmp.path());
    let (status, bytes) = call(&app, "GET", "/projects/demo/slice?axis=sagittal&index=3&mask=reference", None).await;
    assert_eq!(status, StatusCode::OK);
    let img = decode_png(&bytes).unwrap();
    assert_eq!((img.width, img.height, img.channels), (18, 12, 4));

    let (status, bytes) = call(&app, "GET", "/projects/demo/render?w=40&h=30&steps=32&az=10&el=-20", None).await;
    assert_eq!(status, StatusCode::OK);
    let img = decode_png(&bytes).unwrap();
    assert_eq!((img.width, img.height), (40, 30));
    assert!(img.data.iter().any(|&b| b > 0));
}

#[tokio::test]
async fn invalid_parameters_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let app = service_at(tmp.path());
    let cases = [
        ("GET", "/projects/demo/slice?index=0", None, "axis"),
        ("GET", "/projects/demo/slice?axis=z&index=12", None, "index"),
        ("GET", "/projects/demo/slice?axis=q&index=0", None, "axis"),
        ("GET", "/projects/demo/slice?axis=z&index=0&window=0.8,0.2", None, "window"),
        ("GET", "/projects/demo/render?steps=0", None, "steps"),
        ("GET", "/projects/demo/render?w=0", None, "cam"),
        ("GET", "/projects/demo/dsc?against=other", None, "against"),
        ("POST", "/projects/demo/stroke", Some(json!({"tool": "disc2d"})), "stroke"),
        (
            "POST",
            "/projects/demo/stroke",
            Some(json!({"tool": "sphere3d", "path": [[1, 1, 1]], "mode": "paint", "radius_mm": -1})),
            "stroke",
        ),
        ("POST", "/projects/demo/interp", Some(json!({"axis": "z", "keys": [3]})), "keys"),
        ("POST", "/projects/demo/interp", Some(json!({"axis": "z", "keys": [5, 2]})), "keys"),
        ("POST", "/projects/demo/interp", Some(json!({"axis": "z", "keys": [0, 40]})), "index"),
        (
            "POST",
            "/projects/demo/pose",
            Some(json!({"translation": [0, 0, 0], "rotation": [2, 0, 0, 0], "scale": 1})),
            "pose",
        ),
    ];
    for (method, uri, body, field) in cases {
        let (status, body) = call_json(&app, method, uri, body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}: {body}");
        assert_eq!(body["field"], field, "{uri}: {body}");
    }
    let (_, body) = call_json(&app, "GET", "/projects/demo", None).await;
    assert_eq!(body["maskVersion"], 0);
    assert_eq!(body["sessionEvents"], 0);
}

#[tokio::test]
async fn strokes_persist_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let app = service_at(tmp.path());
    let (status, body) = call_json(&app, "POST", "/projects/demo/stroke", Some(disc(4, [9.0, 8.0], 3.0))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["maskVersion"], 1);

    let mut sphere = serde_json::to_value(BrushStroke::sphere(vec![[9.5, 8.5, 11.0]], 4.0, BrushMode::Paint)).unwrap();
    sphere["maskVersion"] = json!(1);
    let (status, body) = call_json(&app, "POST", "/projects/demo/stroke", Some(sphere)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["maskVersion"], 2);

    let (status, body) =
        call_json(&app, "POST", "/projects/demo/interp", Some(json!({"axis": "z", "keys": [4, 6], "maskVersion": 2})))
            .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["maskVersion"], 3);

    let (status, bytes) = call(&app, "GET", "/projects/demo/session", None).await;
    assert_eq!(status, StatusCode::OK);
    let log = SessionRecord::parse_jsonl(std::str::from_utf8(&bytes).unwrap()).unwrap();
    assert_eq!(log.events.len(), 5);

    let on_disk = load_project(tmp.path().join("demo")).unwrap();
    assert_eq!(on_disk.session, log);
    let replayed = replay_session(&on_disk, &log).unwrap();
    assert_eq!(&replayed, on_disk.user_mask().unwrap());
    assert!(replayed.count() > 0);

    let (_, body) = call_json(&app, "GET", "/projects/demo/dsc", None).await;
    let d = body["dsc"].as_f64().unwrap();
    assert!(d > 0.0 && d < 1.0);

    let (status, body) = call_json(&app, "GET", "/projects/demo/contours?axis=z", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["axis"], "transverse");
    assert!(!body["contours"].as_array().unwrap().is_empty());

    // A fresh service over the same directory sees the persisted state.
    let (_, body) = call_json(&service_at(tmp.path()), "GET", "/projects/demo/dsc", None).await;
    assert_eq!(body["dsc"].as_f64().unwrap(), d);
}

#[tokio::test]
async fn stale_version_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let app = service_at(tmp.path());
    call_json(&app, "POST", "/projects/demo/stroke", Some(disc(2, [5.0, 5.0], 2.0))).await;
    let mut stroke = disc(3, [5.0, 5.0], 2.0);
    stroke["maskVersion"] = json!(0);
    let (status, body) = call_json(&app, "POST", "/projects/demo/stroke", Some(stroke)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["maskVersion"], 1);
    assert_eq!(body["field"], "maskVersion");
    let (_, body) = call_json(&app, "GET", "/projects/demo", None).await;
    assert_eq!(body["sessionEvents"], 2);
}

#[tokio::test]
async fn event_append_validates_and_versions() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let app = service_at(tmp.path());
    let lines = [
        json!({"t": 0.0, "kind": "anchor"}),
        json!({"t": 10.0, "kind": "gaze", "dir": [1.0, 0.0, 0.0], "hit": "tablet"}),
        json!({"t": 20.0, "kind": "slice_change", "axis": "transverse", "index": 3}),
    ];
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    let (status, body) = call(&app, "POST", "/projects/demo/session/events", Some(text)).await;
    assert_eq!(status, StatusCode::OK);
    let body: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(body, json!({"appended": 3, "events": 3, "maskVersion": 0}));

    let stroke = serde_json::to_value(BrushStroke::disc(Axis::Transverse, 3, vec![[8.0, 8.0]], 3.0, BrushMode::Paint))
        .unwrap();
    let text = format!(
        "{}\n{}\n",
        json!({"t": 30.0, "kind": "stroke_start"}),
        json!({"t": 40.0, "kind": "stroke_end", "stroke": stroke})
    );
    let (_, body) = call(&app, "POST", "/projects/demo/session/events", Some(text)).await;
    let body: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(body["maskVersion"], 1);

    for bad in [
        "{\"t\": 5.0, \"kind\": \"end\"}\n",
        "{\"t\": 50.0, \"kind\": \"gaze\", \"dir\": [2.0, 0.0, 0.0], \"hit\": \"volume\"}\n",
        "{\"t\": 50.0, \"kind\": \"end\"}\nnot json\n",
    ] {
        let (status, body) = call(&app, "POST", "/projects/demo/session/events", Some(bad.into())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        let body: Value = serde_json::from_slice(&body).unwrap();
        assert!(body["line"].as_u64().is_some(), "{body}");
    }
    let (_, bytes) = call(&app, "GET", "/projects/demo/session", None).await;
    assert_eq!(SessionRecord::parse_jsonl(std::str::from_utf8(&bytes).unwrap()).unwrap().events.len(), 5);

    let text = format!("{}\n", json!({"t": 60.0, "kind": "end"}));
    call(&app, "POST", "/projects/demo/session/events", Some(text)).await;
    let (status, body) = call_json(&app, "GET", "/projects/demo/metrics", None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["initialExplorationMs"], 30.0);
    assert_eq!(body["overallTctMs"], 60.0);
    assert_eq!(body["strokes"], 1);
}

#[tokio::test]
async fn pose_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let app = service_at(tmp.path());
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let pose = json!({"translation": [1.0, -2.0, 3.5], "rotation": [h, 0.0, h, 0.0], "scale": 1.25});
    let (status, body) = call_json(&app, "POST", "/projects/demo/pose", Some(pose.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, pose);
    let (_, body) = call_json(&app, "GET", "/projects/demo", None).await;
    assert_eq!(body["pose"], pose);
    let stored = load_project(tmp.path().join("demo")).unwrap();
    assert_eq!(serde_json::to_value(stored.pose).unwrap(), pose);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_writers_are_linearized() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let app = service_at(tmp.path());
    let mut tasks = Vec::new();
    for i in 0..24 {
        let writer = app.clone();
        let mode = if i % 3 == 2 { BrushMode::Erase } else { BrushMode::Paint };
        let stroke = BrushStroke::disc(Axis::Transverse, i % 12, vec![[(i % 7) as f64 * 2.0, 8.0]], 2.5, mode);
        tasks.push(tokio::spawn(async move {
            let body = serde_json::to_value(stroke).unwrap();
            let (status, body) = call_json(&writer, "POST", "/projects/demo/stroke", Some(body)).await;
            assert_eq!(status, StatusCode::OK);
            body["maskVersion"].as_u64().unwrap()
        }));
        if i % 4 == 0 {
            let reader = app.clone();
            tasks.push(tokio::spawn(async move {
                let (status, _) = call(&reader, "GET", "/projects/demo/slice?axis=z&index=5", None).await;
                assert_eq!(status, StatusCode::OK);
                0
            }));
        }
    }
    let mut versions = Vec::new();
    for t in tasks {
        let v = t.await.unwrap();
        if v > 0 {
            versions.push(v);
        }
    }
    versions.sort_unstable();
    assert_eq!(versions, (1..=24).collect::<Vec<u64>>());

    let stored = load_project(tmp.path().join("demo")).unwrap();
    assert_eq!(stored.session.events.len(), 48);
    let replayed = replay_session(&stored, &stored.session).unwrap();
    assert_eq!(mask_hash(&replayed), mask_hash(stored.user_mask().unwrap()));
    let served = LabelVolume::load(tmp.path().join("demo/masks/user.mask.json")).unwrap();
    assert_eq!(served, replayed);
}

#[test]
fn config_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("config.json");
    std::fs::write(&path, r#"{"port": 9000, "dataDir": "/srv/projects"}"#).unwrap();
    let file = ServiceConfig::load(&path).unwrap();
    assert_eq!(file.port, 9000);
    let env = file.clone().with_env(|k| (k == "PORT").then(|| "9100".to_string())).unwrap();
    assert_eq!((env.port, env.data_dir.to_str().unwrap()), (9100, "/srv/projects"));
    assert!(file.with_env(|_| Some("x".into())).is_err());
    assert_eq!(ServiceConfig::default().port, 8080);
}
