use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use hsal_core::artifact::GraphArtifact;
use hsal_core::graph::GraphConfig;
use hsal_core::io::{load_npy, save_npy, HsiCube, LabelMap};
use hsal_core::land::{GroundTruthOracle, LandConfig};
use hsal_core::synthetic::three_clusters;
use hsal_core::{Cloud, Model};
use hsal_service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const GRID: (usize, usize) = (15, 20);

struct Fixture {
    dir: tempfile::TempDir,
    cloud: Cloud,
    truth: LabelMap,
    model: Model,
}

fn config() -> LandConfig {
    LandConfig {
        graph: GraphConfig { k: 20, num_eigs: 20, t: 30, ..GraphConfig::default() },
        ..LandConfig::default()
    }
}

/// Three clusters on a 15x20 grid, every 37th pixel background.
fn fixture() -> Fixture {
    let data = three_clusters::<f64>(3);
    let labels: Vec<u32> = data.truth.labels.iter().enumerate().map(|(i, &l)| if i % 37 == 0 { 0 } else { l }).collect();
    let truth = LabelMap::with_num_classes(labels, 3);
    let model = Model::fit(&data.cloud, &config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("clusters");
    GraphArtifact::from_model(&model, &data.cloud, &config(), Some(GRID)).save(ds.join("graph")).unwrap();
    let flat: Vec<f64> = data.cloud.points.iter().copied().collect();
    save_npy(&HsiCube::new(GRID.0, GRID.1, 2, flat).unwrap().to_npy(), ds.join("cube.npy")).unwrap();
    save_npy(&truth.to_npy(Some(GRID)), ds.join("truth.npy")).unwrap();
    std::fs::write(ds.join("classes.json"), r#"["left", "right", "top"]"#).unwrap();
    Fixture { dir, cloud: data.cloud, truth, model }
}

fn app(root: &Path) -> Router {
    router(Arc::new(AppState::open(root).unwrap()), None)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
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
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

async fn create(app: &Router) -> String {
    let (status, body) = call(app, Method::POST, "/sessions", Some(json!({"dataset": "clusters"}))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_string()
}

async fn label(app: &Router, id: &str, index: usize, class: u32) -> (StatusCode, Value) {
    call(app, Method::POST, &format!("/sessions/{id}/labels"), Some(json!({"index": index, "class": class}))).await
}

fn assert_error(status: StatusCode, body: &Value, expected: StatusCode) {
    assert_eq!(status, expected, "{body}");
    assert!(body["code"].is_string() && body["message"].is_string(), "error body {body}");
}

/// Labels the first `budget` queries from ground truth, skipping background.
async fn label_from_truth(app: &Router, id: &str, truth: &LabelMap, budget: usize) {
    let (_, page) = call(app, Method::GET, &format!("/sessions/{id}/queries?offset=0&limit={budget}"), None).await;
    for item in page["items"].as_array().unwrap() {
        let index = item["index"].as_u64().unwrap() as usize;
        let class = truth.labels[index];
        if class != 0 {
            let (status, body) = label(app, id, index, class).await;
            assert_eq!(status, StatusCode::OK, "{body}");
        }
    }
}

#[tokio::test]
async fn create_session_reports_shape_and_palette() {
    let fx = fixture();
    let app = app(fx.dir.path());
    let (status, body) = call(&app, Method::POST, "/sessions", Some(json!({"dataset": "clusters"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["n"], 300);
    assert_eq!((body["height"].as_u64(), body["width"].as_u64()), (Some(15), Some(20)));
    assert_eq!(body["bands"], 2);
    assert_eq!(body["t"], 30);
    assert_eq!(body["status"], "awaiting-labels");
    let classes = body["classes"].as_array().unwrap();
    assert_eq!(classes.len(), 3);
    assert_eq!(classes[1]["name"], "right");
    assert_eq!(classes[2]["class"], 3);

    let (_, list) = call(&app, Method::GET, "/sessions", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
    let (_, names) = call(&app, Method::GET, "/datasets", None).await;
    assert_eq!(names, json!(["clusters"]));
}

#[tokio::test]
async fn missing_artifacts_are_a_conflict_with_a_hint() {
    let fx = fixture();
    std::fs::create_dir_all(fx.dir.path().join("empty")).unwrap();
    let app = app(fx.dir.path());
    let (status, body) = call(&app, Method::POST, "/sessions", Some(json!({"dataset": "empty"}))).await;
    assert_error(status, &body, StatusCode::CONFLICT);
    assert!(body["message"].as_str().unwrap().contains("hsal graph"), "{body}");
    let (status, body) = call(&app, Method::POST, "/sessions", Some(json!({"dataset": "nope"}))).await;
    assert_error(status, &body, StatusCode::CONFLICT);
    let (status, body) = call(&app, Method::POST, "/sessions", Some(json!({"dataset": "../etc"}))).await;
    assert_error(status, &body, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, body) = call(&app, Method::POST, "/sessions", Some(json!({"name": "clusters"}))).await;
    assert_error(status, &body, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, body) = call(&app, Method::GET, "/sessions/unknown/queries", None).await;
    assert_error(status, &body, StatusCode::NOT_FOUND);
    let (status, body) = call(&app, Method::GET, "/no/such/route", None).await;
    assert_error(status, &body, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn pages_cover_the_query_order_exactly() {
    let fx = fixture();
    let app = app(fx.dir.path());
    let id = create(&app).await;
    let (_, first) = call(&app, Method::GET, &format!("/sessions/{id}/queries?offset=0&limit=10"), None).await;
    let top: Vec<usize> = first["items"].as_array().unwrap().iter().map(|i| i["index"].as_u64().unwrap() as usize).collect();
    assert_eq!(top, fx.model.scores.query_order[..10]);

    let mut seen = Vec::new();
    let mut ranks = Vec::new();
    for offset in (0..310).step_by(7) {
        let (status, page) = call(&app, Method::GET, &format!("/sessions/{id}/queries?offset={offset}&limit=7"), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(page["total"], 300);
        for item in page["items"].as_array().unwrap() {
            let index = item["index"].as_u64().unwrap() as usize;
            ranks.push(item["rank"].as_u64().unwrap() as usize);
            assert_eq!(item["score"].as_f64().unwrap(), fx.model.scores.score[index]);
            assert_eq!((item["row"].as_u64().unwrap() as usize, item["col"].as_u64().unwrap() as usize), (index / 20, index % 20));
            seen.push(index);
        }
    }
    assert_eq!(seen, fx.model.scores.query_order);
    assert!(ranks.windows(2).all(|w| w[0] < w[1]));
    let (status, page) = call(&app, Method::GET, &format!("/sessions/{id}/queries?offset=5000"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(page["items"], json!([]));
    let (status, body) = call(&app, Method::GET, &format!("/sessions/{id}/queries?offset=-1"), None).await;
    assert_error(status, &body, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn label_validation_and_overwrite() {
    let fx = fixture();
    let app = app(fx.dir.path());
    let id = create(&app).await;
    let (status, body) = label(&app, &id, 4, 2).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!((body["answered"].as_u64(), body["status"].as_str()), (Some(1), Some("awaiting-labels")));

    let (status, body) = label(&app, &id, 4, 0).await;
    assert_error(status, &body, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, body) = label(&app, &id, 4, 4).await;
    assert_error(status, &body, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, body) = label(&app, &id, 300, 1).await;
    assert_error(status, &body, StatusCode::NOT_FOUND);

    let (_, body) = label(&app, &id, 4, 3).await;
    assert_eq!((body["answered"].as_u64(), body["changed"].as_bool()), (Some(1), Some(true)));
    let (_, body) = label(&app, &id, 4, 3).await;
    assert_eq!(body["changed"], false);
    let (_, labels) = call(&app, Method::GET, &format!("/sessions/{id}/labels"), None).await;
    assert_eq!(labels, json!([{"index": 4, "class": 3}]));

    let log = std::fs::read_to_string(fx.dir.path().join(format!(".sessions/{id}.jsonl"))).unwrap();
    assert_eq!(log.lines().count(), 3, "created + two distinct labels:\n{log}");
}

#[tokio::test]
async fn propagation_requires_answers_and_is_idempotent() {
    let fx = fixture();
    let app = app(fx.dir.path());
    let id = create(&app).await;
    let (status, body) = call(&app, Method::POST, &format!("/sessions/{id}/propagate"), None).await;
    assert_error(status, &body, StatusCode::CONFLICT);
    let (status, body) = call(&app, Method::GET, &format!("/sessions/{id}/map"), None).await;
    assert_error(status, &body, StatusCode::CONFLICT);

    label(&app, &id, 10, 2).await;
    let (status, summary) = call(&app, Method::POST, &format!("/sessions/{id}/propagate"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(summary["counts"], json!([{"class": 1, "count": 0}, {"class": 2, "count": 300}, {"class": 3, "count": 0}]));
    let (_, map) = call(&app, Method::GET, &format!("/sessions/{id}/map"), None).await;
    assert!(map["labels"].as_array().unwrap().iter().all(|l| l == 2));

    let (_, again) = call(&app, Method::POST, &format!("/sessions/{id}/propagate"), None).await;
    assert_eq!(again, summary);
    let (_, map2) = call(&app, Method::GET, &format!("/sessions/{id}/map"), None).await;
    assert_eq!(map, map2);
    let (_, metrics) = call(&app, Method::GET, &format!("/sessions/{id}/metrics"), None).await;
    assert_eq!(metrics["propagations"], 1);
}

#[tokio::test]
async fn service_matches_batch_bit_for_bit() {
    let fx = fixture();
    let app = app(fx.dir.path());
    for budget in [3, 10, 40] {
        let id = create(&app).await;
        label_from_truth(&app, &id, &fx.truth, budget).await;
        let (status, summary) = call(&app, Method::POST, &format!("/sessions/{id}/propagate"), None).await;
        assert_eq!(status, StatusCode::OK, "{summary}");

        let batch = fx.model.query(&mut GroundTruthOracle::new(&fx.truth), budget).unwrap();
        let labels = fx.model.propagate(&batch).unwrap();
        let accuracy = hsal_core::experiment::overall_accuracy(&labels.y, &fx.truth).unwrap();
        assert_eq!(summary["accuracy"].as_f64().unwrap().to_bits(), accuracy.to_bits(), "B={budget}");
        assert_eq!(summary["answered"].as_u64().unwrap() as usize, batch.queried.len());

        let (_, map) = call(&app, Method::GET, &format!("/sessions/{id}/map"), None).await;
        let served: Vec<u32> = map["labels"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as u32).collect();
        assert_eq!(served, labels.y, "B={budget}");

        // NPY export of the batch map holds the same values
        let path = fx.dir.path().join(format!("labels_{budget}.npy"));
        save_npy(&labels.to_label_map(3).to_npy(Some(GRID)), &path).unwrap();
        let npy = load_npy(&path).unwrap();
        assert_eq!(npy.shape, vec![15, 20]);
        let exported: Vec<u32> = npy.data.to_i64().unwrap().into_iter().map(|v| v as u32).collect();
        assert_eq!(exported, served);
        assert_eq!((map["height"].as_u64(), map["width"].as_u64()), (Some(15), Some(20)));

        let (_, metrics) = call(&app, Method::GET, &format!("/sessions/{id}/metrics"), None).await;
        assert_eq!(metrics["summary"], summary);
        let confusion: Vec<Vec<u64>> = serde_json::from_value(metrics["confusion"].clone()).unwrap();
        let hits: u64 = (0..3).map(|i| confusion[i][i]).sum();
        let total: u64 = confusion.iter().flatten().sum();
        assert_eq!((hits as f64 / total as f64).to_bits(), accuracy.to_bits());
    }
}

#[tokio::test]
async fn sessions_are_isolated() {
    let fx = fixture();
    let app = app(fx.dir.path());
    let (a, b) = (create(&app).await, create(&app).await);
    assert_ne!(a, b);
    label(&app, &a, 0, 1).await;
    label(&app, &a, 150, 2).await;
    label(&app, &b, 0, 3).await;
    let (_, la) = call(&app, Method::GET, &format!("/sessions/{a}/labels"), None).await;
    let (_, lb) = call(&app, Method::GET, &format!("/sessions/{b}/labels"), None).await;
    assert_eq!(la, json!([{"index": 0, "class": 1}, {"index": 150, "class": 2}]));
    assert_eq!(lb, json!([{"index": 0, "class": 3}]));
    call(&app, Method::POST, &format!("/sessions/{b}/propagate"), None).await;
    let (_, ma) = call(&app, Method::GET, &format!("/sessions/{a}/metrics"), None).await;
    assert_eq!((ma["status"].as_str(), ma["propagations"].as_u64()), (Some("awaiting-labels"), Some(0)));
    let (_, page) = call(&app, Method::GET, &format!("/sessions/{b}/pixels/0"), None).await;
    assert_eq!(page["answered"], 3);
    assert_eq!(page["label"], 3);
}

#[tokio::test]
async fn pixel_lookup_matches_model_and_cloud() {
    let fx = fixture();
    let app = app(fx.dir.path());
    let id = create(&app).await;
    for index in [0usize, 21, 299] {
        let (status, px) = call(&app, Method::GET, &format!("/sessions/{id}/pixels/{index}"), None).await;
        assert_eq!(status, StatusCode::OK);
        let spectrum: Vec<f64> = serde_json::from_value(px["spectrum"].clone()).unwrap();
        assert_eq!(spectrum, fx.cloud.row(index));
        assert_eq!(px["p"].as_f64().unwrap(), fx.model.scores.density[index]);
        assert_eq!(px["rho"].as_f64().unwrap(), fx.model.scores.rho[index]);
        assert_eq!(px["score"].as_f64().unwrap(), fx.model.scores.score[index]);
        assert_eq!((px["row"].as_u64().unwrap() as usize, px["col"].as_u64().unwrap() as usize), (index / 20, index % 20));
        assert_eq!(fx.model.scores.query_order[px["rank"].as_u64().unwrap() as usize], index);
        assert_eq!(px["truth"].as_u64().unwrap() as u32, fx.truth.labels[index]);
    }
    for bad in ["300", "-1", "x"] {
        let (status, body) = call(&app, Method::GET, &format!("/sessions/{id}/pixels/{bad}"), None).await;
        assert_error(status, &body, StatusCode::NOT_FOUND);
    }
}

#[tokio::test]
async fn restart_replays_session_logs() {
    let fx = fixture();
    let (id, before_map, before_labels) = {
        let app = app(fx.dir.path());
        let id = create(&app).await;
        label_from_truth(&app, &id, &fx.truth, 12).await;
        call(&app, Method::POST, &format!("/sessions/{id}/propagate"), None).await;
        label(&app, &id, 299, 1).await;
        let (_, map) = call(&app, Method::GET, &format!("/sessions/{id}/map"), None).await;
        let (_, labels) = call(&app, Method::GET, &format!("/sessions/{id}/labels"), None).await;
        (id, map, labels)
    };
    // simulate a crash mid-write
    let log = fx.dir.path().join(format!(".sessions/{id}.jsonl"));
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.push_str("{\"event\":\"lab");
    std::fs::write(&log, text).unwrap();

    let app = app(fx.dir.path());
    let (status, info) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(info["status"], "awaiting-labels");
    let (_, labels) = call(&app, Method::GET, &format!("/sessions/{id}/labels"), None).await;
    assert_eq!(labels, before_labels);
    let (_, map) = call(&app, Method::GET, &format!("/sessions/{id}/map"), None).await;
    assert_eq!(map, before_map);
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/propagate"), None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_submits_serialize() {
    let fx = fixture();
    let app = app(fx.dir.path());
    let id = create(&app).await;
    let tasks: Vec<_> = (0..40)
        .map(|i| {
            let (app, id) = (app.clone(), id.clone());
            tokio::spawn(async move { label(&app, &id, i % 20, 1 + (i / 20) as u32).await.0 })
        })
        .collect();
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    let (_, labels) = call(&app, Method::GET, &format!("/sessions/{id}/labels"), None).await;
    assert_eq!(labels.as_array().unwrap().len(), 20);
    let log = std::fs::read_to_string(fx.dir.path().join(format!(".sessions/{id}.jsonl"))).unwrap();
    assert!(log.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));
    assert_eq!(log.lines().count(), 41);
}

#[tokio::test]
async fn static_files_are_served_behind_the_api() {
    let fx = fixture();
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>ui</html>").unwrap();
    let app = router(Arc::new(AppState::open(fx.dir.path()).unwrap()), Some(ui.path().to_path_buf()));
    let resp = app.clone().oneshot(Request::get("/").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..], b"<html>ui</html>");
    let (status, _) = call(&app, Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
}
