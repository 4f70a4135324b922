use std::io::Cursor;
use std::path::Path;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use image::{ImageBuffer, ImageFormat, Rgb};
use reviewlens_core::api::{JobKind, JobRecord, JobState};
use reviewlens_core::config::AppConfig;
use reviewlens_core::store::{ImageManifest, ImageRecord, Label};
use reviewlens_service::{router, AppState, JobBook};
use serde_json::{json, Value};
use tower::ServiceExt;

fn state(data: &Path) -> AppState {
    let mut config = AppConfig::default();
    config.service.data_dir = data.to_path_buf();
    AppState::open(config).unwrap()
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
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
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn get_json(app: &Router, uri: &str) -> Value {
    let (status, body) = call(app, Method::GET, uri, None).await;
    assert_eq!(status, StatusCode::OK, "{uri}: {}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

fn error_code(body: &[u8]) -> String {
    let v: Value = serde_json::from_slice(body).unwrap();
    v["code"].as_str().unwrap().to_string()
}

fn png(dir: &Path, name: &str, shade: u8) -> std::path::PathBuf {
    let img = ImageBuffer::from_fn(40, 30, |x, y| Rgb([shade, (x * 5) as u8, (y * 7) as u8]));
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, buf.into_inner()).unwrap();
    path
}

/// Six document pages (three documents, two pages each); none labeled.
fn manifest(dir: &Path) -> ImageManifest {
    let images = (0..6u8)
        .map(|i| {
            let doc = format!("doc{}", i / 2);
            ImageRecord::new(format!("{doc}/p{}", i % 2), png(dir, &format!("{i}.png"), i * 40)).page(doc, u32::from(i % 2))
        })
        .collect();
    ImageManifest::new("fixture", images).unwrap()
}

async fn create(app: &Router, m: &ImageManifest) -> String {
    let (status, body) = call(app, Method::POST, "/api/v1/datasets", Some(serde_json::to_value(m).unwrap())).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
    serde_json::from_slice::<Value>(&body).unwrap()["id"].as_str().unwrap().to_string()
}

async fn wait(app: &Router, job: &str) -> JobRecord {
    for _ in 0..3000 {
        let rec: JobRecord = serde_json::from_value(get_json(app, &format!("/api/v1/jobs/{job}")).await).unwrap();
        if rec.state.is_terminal() {
            return rec;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("job {job} did not finish");
}

async fn submit(app: &Router, uri: &str, body: Value) -> JobRecord {
    let (status, bytes) = call(app, Method::POST, uri, Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{}", String::from_utf8_lossy(&bytes));
    let rec: JobRecord = serde_json::from_slice(&bytes).unwrap();
    let done = wait(app, &rec.id).await;
    assert_eq!(done.state, JobState::Done, "{:?}", done.error);
    done
}

async fn label(app: &Router, image: &str, label: &str) -> StatusCode {
    let uri = format!("/api/v1/images/{}/label", image.replace('/', "%2F"));
    call(app, Method::PUT, &uri, Some(json!({ "label": label }))).await.0
}

#[tokio::test]
async fn errors_carry_a_json_body() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(state(dir.path()));
    assert_eq!(get_json(&app, "/api/v1/health").await["status"], "ok");

    let (status, body) = call(&app, Method::GET, "/api/v1/nope", None).await;
    assert_eq!((status, error_code(&body).as_str()), (StatusCode::NOT_FOUND, "not_found"));
    let (status, body) = call(&app, Method::DELETE, "/api/v1/health", None).await;
    assert_eq!(status, StatusCode::METHOD_NOT_ALLOWED);
    assert_eq!(error_code(&body), "method_not_allowed");
    let (status, _) = call(&app, Method::GET, "/api/v1/datasets/ds-missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::GET, "/api/v1/jobs/job-missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let bad = json!({ "name": "x", "images": [{ "id": "", "path": "a.png" }] });
    let (status, body) = call(&app, Method::POST, "/api/v1/datasets", Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{}", String::from_utf8_lossy(&body));
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["status"], 422);
    assert!(v["message"].as_str().is_some());
}

#[tokio::test]
async fn labels_and_cutoff_are_read_back_and_persist() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let app = router(state(&data));
    let id = create(&app, &manifest(dir.path())).await;

    assert_eq!(label(&app, "doc0/p1", "positive").await, StatusCode::NO_CONTENT);
    let images = get_json(&app, &format!("/api/v1/datasets/{id}/images")).await;
    assert_eq!(images["images"][1]["label"], "positive");
    assert_eq!(label(&app, "doc0/p1", "negative").await, StatusCode::NO_CONTENT);
    assert_eq!(label(&app, "nobody", "negative").await, StatusCode::NOT_FOUND);
    assert_eq!(label(&app, "doc0/p0", "maybe").await, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, _) = call(&app, Method::PUT, &format!("/api/v1/datasets/{id}/cutoff"), Some(json!({ "cutoff": 0.7 }))).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, body) = call(&app, Method::PUT, &format!("/api/v1/datasets/{id}/cutoff"), Some(json!({ "cutoff": 1.5 }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{}", String::from_utf8_lossy(&body));

    let (status, bytes) = call(&app, Method::GET, "/api/v1/images/doc0%2Fp0", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(&bytes[1..4], b"PNG");

    // a fresh process sees the same state
    drop(app);
    let app = router(state(&data));
    let summary = get_json(&app, &format!("/api/v1/datasets/{id}")).await;
    assert_eq!(summary["cutoff"], 0.7);
    assert_eq!((summary["negative"].as_u64(), summary["unlabeled"].as_u64()), (Some(1), Some(5)));
    let images = get_json(&app, &format!("/api/v1/datasets/{id}/images")).await;
    assert_eq!(images["images"][1]["label"], "negative");
}

#[tokio::test]
async fn feature_clustering_and_training_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(state(&dir.path().join("data")));
    let id = create(&app, &manifest(dir.path())).await;
    let base = format!("/api/v1/datasets/{id}");

    let (status, body) = call(&app, Method::POST, &format!("{base}/clusterings"), Some(json!({ "k": 2 }))).await;
    assert_eq!((status, error_code(&body).as_str()), (StatusCode::CONFLICT, "features_missing"));
    let (status, _) = call(&app, Method::POST, &format!("{base}/train"), Some(json!({}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, body) = call(
        &app,
        Method::POST,
        &format!("{base}/features"),
        Some(json!({ "mode": "conv8192", "backbone": "pretrained", "model_path": "/no/such.onnx" })),
    )
    .await;
    assert_eq!((status, error_code(&body).as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "model"));

    let done = submit(&app, &format!("{base}/features"), json!({ "mode": "conv8192" })).await;
    assert_eq!(done.kind, JobKind::Extract);
    assert_eq!(done.progress, 1.0);
    assert_eq!(get_json(&app, &base).await["features"], json!(["conv8192"]));

    let (status, body) = call(&app, Method::POST, &format!("{base}/clusterings"), Some(json!({ "k": 7 }))).await;
    assert_eq!((status, error_code(&body).as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "degenerate_data"));
    let (status, _) = call(&app, Method::POST, &format!("{base}/clusterings"), Some(json!({ "k": 0 }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let mut galleries = Vec::new();
    for _ in 0..2 {
        let done = submit(&app, &format!("{base}/clusterings"), json!({ "k": 3, "seed": 4 })).await;
        let (status, bytes) = call(&app, Method::GET, &format!("/api/v1/clusterings/{}", done.result_ref.unwrap()), None).await;
        assert_eq!(status, StatusCode::OK);
        galleries.push(bytes);
    }
    assert_eq!(galleries[0], galleries[1]);
    let g: Value = serde_json::from_slice(&galleries[0]).unwrap();
    let members: usize = g["clusters"].as_array().unwrap().iter().map(|c| c["size"].as_u64().unwrap() as usize).sum();
    assert_eq!(members, 6);

    // one class only
    label(&app, "doc0/p0", "positive").await;
    let (status, body) = call(&app, Method::POST, &format!("{base}/train"), Some(json!({}))).await;
    assert_eq!((status, error_code(&body).as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "degenerate_data"));

    for (img, l) in [("doc0/p1", "positive"), ("doc1/p0", "negative"), ("doc1/p1", "negative")] {
        label(&app, img, l).await;
    }
    let config = json!({ "config": { "epochs": 2, "hidden_units": 4, "validation_fraction": 0.0, "batch_size": 2 } });
    let done = submit(&app, &format!("{base}/train"), config).await;
    let model = done.result_ref.unwrap();
    let info = get_json(&app, &format!("/api/v1/models/{model}")).await;
    assert_eq!(info["param_count"], 8192 * 4 + 4 + 4 + 1);
    assert_eq!(info["metrics"]["epochs"].as_array().unwrap().len(), 2);

    let (status, body) = call(
        &app,
        Method::POST,
        &format!("/api/v1/models/{model}/predict"),
        Some(json!({ "image_ids": ["doc2/p0", "doc0/p0"], "cutoff": 0.0 })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let p: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(p["predictions"][0]["image_id"], "doc2/p0");
    assert_eq!(p["predictions"][1]["label"], "positive");
    let (status, _) = call(
        &app,
        Method::POST,
        &format!("/api/v1/models/{model}/predict"),
        Some(json!({ "image_ids": ["ghost"] })),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn detections_scores_and_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(state(&dir.path().join("data")));
    let id = create(&app, &manifest(dir.path())).await;

    let (status, _) = call(&app, Method::GET, "/api/v1/evaluations", None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let import = json!({ "documents": [
        { "doc_id": "doc0", "page_count": 2, "pages": [
            { "page_index": 0, "detections": [{ "score": 0.4, "box": [0.1, 0.1, 0.2, 0.2], "class": "handwriting" }] },
            { "page_index": 1, "detections": [{ "score": 0.9, "box": [0.1, 0.1, 0.2, 0.2], "class": "handwriting" }] } ] },
        { "doc_id": "doc1", "page_count": 2, "pages": [] },
        { "doc_id": "doc2", "page_count": 2, "pages": [
            { "page_index": 1, "detections": [{ "score": 0.6, "box": [0.5, 0.5, 0.7, 0.9], "class": "handwriting" }] } ] } ] });
    let (status, body) = call(&app, Method::POST, "/api/v1/detections/import", Some(import)).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
    assert_eq!(get_json(&app, "/api/v1/documents/scores").await, json!({ "doc0": 0.9, "doc1": 0.0, "doc2": 0.6 }));
    let d = get_json(&app, "/api/v1/documents/doc2/detections").await;
    assert_eq!(d["pages"][0]["detections"][0]["box"], json!([0.5, 0.5, 0.7, 0.9]));

    let bad = json!({ "documents": [{ "doc_id": "x", "page_count": 1, "pages": [{ "page_index": 3, "detections": [] }] }] });
    let (status, _) = call(&app, Method::POST, "/api/v1/detections/import", Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    // doc0 and doc2 positive by a page label, doc1 negative
    for (img, l) in [("doc0/p1", "positive"), ("doc1/p0", "negative"), ("doc2/p0", "positive")] {
        label(&app, img, l).await;
    }
    let report = get_json(&app, &format!("/api/v1/evaluations?dataset={id}&cutoffs=0.5,0.95")).await;
    assert_eq!(report["dataset"], "fixture");
    assert_eq!(report["table"][0]["precision"], 1.0);
    assert_eq!(report["table"][0]["recall"], 1.0);
    assert_eq!(report["table"][1]["recall"], 0.0);
    let (status, csv) = call(&app, Method::GET, "/api/v1/evaluations?format=csv", None).await;
    assert_eq!(status, StatusCode::OK);
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("cutoff,precision,recall,f1,accuracy\n"));
    assert_eq!(csv.lines().count(), 5);

    let curve = get_json(&app, "/api/v1/evaluations/pr-curve").await;
    let cutoffs: Vec<f64> = curve.as_array().unwrap().iter().map(|p| p["cutoff"].as_f64().unwrap()).collect();
    assert_eq!(cutoffs, [0.0, 0.6, 0.9, 1.0]);
    let (status, _) = call(&app, Method::GET, "/api/v1/evaluations?cutoffs=2", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn interrupted_jobs_resume_after_restart() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let app = router(state(&data));
    let id = create(&app, &manifest(dir.path())).await;
    drop(app);

    // a record left behind by a process that died mid-run
    let rec = JobRecord {
        id: "job-interrupted".into(),
        kind: JobKind::Extract,
        state: JobState::Running,
        progress: 0.5,
        result_ref: None,
        error: None,
        dataset_id: id.clone(),
        request: json!({ "mode": "fc2_4096" }),
        created_at: "2026-01-01T00:00:00.000000Z".into(),
    };
    std::fs::write(data.join("jobs/job-interrupted.json"), serde_json::to_vec(&rec).unwrap()).unwrap();
    let book = JobBook::open(data.join("jobs")).unwrap();
    assert_eq!(book.get("job-interrupted").unwrap().state, JobState::Queued);

    let st = state(&data);
    reviewlens_service::resume_jobs(&st);
    let app = router(st);
    let done = wait(&app, "job-interrupted").await;
    assert_eq!(done.state, JobState::Done, "{:?}", done.error);
    assert_eq!(done.result_ref.as_deref(), Some(format!("{id}:fc2_4096").as_str()));
    assert_eq!(get_json(&app, &format!("/api/v1/datasets/{id}")).await["features"], json!(["fc2_4096"]));
}

#[test]
fn label_values_round_trip() {
    assert_eq!(serde_json::to_value(Label::Unlabeled).unwrap(), "unlabeled");
}
