use std::collections::HashMap;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use reviewlens_core::api::{
    ClusteringRequest, Created, CutoffRequest, DatasetSummary, FeaturesRequest, Health, ImportSummary, JobKind,
    JobRecord, LabelRequest, ModelInfo, PredictRequest, PredictResponse, Prediction, TrainRequest,
};
use reviewlens_core::backbone::BackboneKind;
use reviewlens_core::clustering::distinct_points;
use reviewlens_core::detection::{document_scores, parse_detections, render_scores};
use reviewlens_core::evaluation::{pr_curve, render_report, ReportFormat};
use reviewlens_core::head::{load_head, predict};
use reviewlens_core::pipeline::{evaluate, parse_cutoffs, rows_for};
use reviewlens_core::store::ImageManifest;
use reviewlens_core::{Error, FeatureMode};

use crate::error::{ApiError, ApiResult, JsonBody};
use crate::state::{check_resource_id, read_json, AppState};
use crate::work::{backbone_for, cluster_config, default_mode, load_features};

pub const DEFAULT_CUTOFFS: &str = "0.1,0.5,0.9,0.99";

type Params = Query<HashMap<String, String>>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Error> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::from)
}

fn json_text(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn missing_features(e: Error) -> ApiError {
    match e {
        Error::NotFound(m) => ApiError::conflict("features_missing", m),
        other => other.into(),
    }
}

pub async fn health() -> Json<Health> {
    Json(Health { status: "ok".into() })
}

pub async fn create_dataset(State(st): State<AppState>, body: String) -> ApiResult<(StatusCode, Json<Created>)> {
    let manifest = ImageManifest::from_json(&body)?;
    let ds = blocking({
        let st = st.clone();
        move || st.add_dataset(manifest)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(Created { id: ds.id.clone() })))
}

pub async fn list_datasets(State(st): State<AppState>) -> Json<Vec<DatasetSummary>> {
    Json(st.datasets().iter().map(|d| d.summary()).collect())
}

pub async fn get_dataset(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<DatasetSummary>> {
    Ok(Json(st.dataset(&id)?.summary()))
}

pub async fn get_dataset_images(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ImageManifest>> {
    Ok(Json(st.dataset(&id)?.manifest()))
}

pub async fn put_cutoff(
    State(st): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<CutoffRequest>,
) -> ApiResult<StatusCode> {
    st.dataset(&id)?.set_cutoff(req.cutoff)?;
    Ok(StatusCode::NO_CONTENT)
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("bmp") => "image/bmp",
        _ => "application/octet-stream",
    }
}

pub async fn get_image(State(st): State<AppState>, Path(id): Path<String>, Query(q): Params) -> ApiResult<Response> {
    let (_, rec) = st.find_image(&id, q.get("dataset").map(String::as_str))?;
    let bytes = tokio::fs::read(&rec.path)
        .await
        .map_err(|e| ApiError::not_found(format!("image `{id}` bytes unavailable: {e}")))?;
    Ok(([(header::CONTENT_TYPE, content_type(&rec.path))], bytes).into_response())
}

pub async fn put_label(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Params,
    JsonBody(req): JsonBody<LabelRequest>,
) -> ApiResult<StatusCode> {
    let (ds, _) = st.find_image(&id, q.get("dataset").map(String::as_str))?;
    blocking(move || ds.set_label(&id, req.label)).await?;
    Ok(StatusCode::NO_CONTENT)
}

fn submit(st: &AppState, kind: JobKind, dataset: &str, request: serde_json::Value) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let rec = st.inner.jobs.create(kind, dataset, request)?;
    crate::jobs::spawn(st.clone(), rec.id.clone());
    Ok((StatusCode::ACCEPTED, Json(rec)))
}

pub async fn post_features(
    State(st): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<FeaturesRequest>,
) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let ds = st.dataset(&id)?;
    let cfg = backbone_for(&st, &req)?;
    if cfg.kind == BackboneKind::Pretrained {
        let path = cfg.model_path.as_deref().expect("validated");
        if !path.is_file() {
            return Err(ApiError::unprocessable("model", format!("model file {} not found", path.display())));
        }
    }
    submit(&st, JobKind::Extract, &ds.id, serde_json::to_value(&req).map_err(Error::from)?)
}

pub async fn post_clustering(
    State(st): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<ClusteringRequest>,
) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let ds = st.dataset(&id)?;
    cluster_config(&req).validate()?;
    let mode = req.mode.unwrap_or_else(|| default_mode(&ds));
    let k = req.k;
    let check_ds = ds.clone();
    let distinct = tokio::task::spawn_blocking(move || load_features(&check_ds, mode).map(|(_, p)| distinct_points(&p)))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(missing_features)?;
    if distinct < k {
        return Err(Error::DegenerateData(format!("k = {k} exceeds the {distinct} distinct points")).into());
    }
    let req = ClusteringRequest { mode: Some(mode), ..req };
    submit(&st, JobKind::Cluster, &ds.id, serde_json::to_value(&req).map_err(Error::from)?)
}

pub async fn post_train(
    State(st): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<TrainRequest>,
) -> ApiResult<(StatusCode, Json<JobRecord>)> {
    let ds = st.dataset(&id)?;
    req.config.validate()?;
    let mode = req.mode.unwrap_or(FeatureMode::Conv8192);
    if !ds.features_path(mode).is_file() {
        return Err(ApiError::conflict(
            "features_missing",
            format!("dataset `{}` has no {mode} features; extract them first", ds.id),
        ));
    }
    let s = ds.summary();
    if s.positive == 0 || s.negative == 0 {
        return Err(Error::DegenerateData(format!(
            "training needs both classes labeled ({} positive, {} negative)",
            s.positive, s.negative
        ))
        .into());
    }
    let req = TrainRequest { mode: Some(mode), ..req };
    submit(&st, JobKind::Train, &ds.id, serde_json::to_value(&req).map_err(Error::from)?)
}

pub async fn get_job(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobRecord>> {
    st.inner
        .jobs
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("job `{id}`")))
}

pub async fn get_clustering(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    check_resource_id(&id)?;
    let bytes = tokio::fs::read(st.clustering_path(&id))
        .await
        .map_err(|_| ApiError::not_found(format!("clustering `{id}`")))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

fn model_info(st: &AppState, id: &str) -> Result<ModelInfo, Error> {
    check_resource_id(id)?;
    let path = st.model_dir(id).join("info.json");
    if !path.is_file() {
        return Err(Error::NotFound(format!("model `{id}`")));
    }
    read_json(&path)
}

pub async fn get_model(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ModelInfo>> {
    Ok(Json(model_info(&st, &id)?))
}

pub async fn post_predict(
    State(st): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<PredictRequest>,
) -> ApiResult<Json<PredictResponse>> {
    if !(0.0..=1.0).contains(&req.cutoff) {
        return Err(Error::Config(format!("cutoff {} outside [0, 1]", req.cutoff)).into());
    }
    let info = model_info(&st, &id)?;
    let ds = st.dataset(&info.dataset_id)?;
    let dir = st.model_dir(&id);
    let out = blocking(move || {
        let head = load_head(&dir)?;
        let (ids, features) = load_features(&ds, info.mode)?;
        let rows = rows_for(&ids, &features, &req.image_ids)?;
        let (decisions, probs) = predict(&head.params, &rows, req.cutoff)?;
        Ok(req
            .image_ids
            .into_iter()
            .zip(probs)
            .zip(decisions)
            .map(|((image_id, probability), label)| Prediction {
                image_id,
                probability,
                label,
            })
            .collect())
    })
    .await?;
    Ok(Json(PredictResponse { predictions: out }))
}

pub async fn import_detections(State(st): State<AppState>, body: axum::body::Bytes) -> ApiResult<(StatusCode, Json<ImportSummary>)> {
    let docs = parse_detections(&body).map_err(|e| match e {
        Error::Json(j) => ApiError::unprocessable("invalid_body", j.to_string()),
        other => other.into(),
    })?;
    let documents = blocking(move || st.import_detections(docs)).await?;
    Ok((StatusCode::CREATED, Json(ImportSummary { documents })))
}

pub async fn get_scores(State(st): State<AppState>) -> ApiResult<Response> {
    let docs: Vec<_> = st.detections().into_values().collect();
    Ok(json_text(render_scores(&document_scores(&docs))?))
}

pub async fn get_document_detections(State(st): State<AppState>, Path(doc_id): Path<String>) -> ApiResult<Response> {
    let doc = st
        .detections()
        .remove(&doc_id)
        .ok_or_else(|| ApiError::not_found(format!("document `{doc_id}`")))?;
    Ok(Json(doc).into_response())
}

fn labeled_truth(st: &AppState, q: &HashMap<String, String>) -> ApiResult<(String, HashMap<String, bool>)> {
    let (name, truth) = st.truth(q.get("dataset").map(String::as_str))?;
    if truth.is_empty() {
        return Err(ApiError::conflict("no_ground_truth", "no labeled images or documents to evaluate against"));
    }
    Ok((name, truth))
}

/// Same bytes as the CLI's `evaluate` report for the same inputs.
pub async fn get_evaluations(State(st): State<AppState>, Query(q): Params) -> ApiResult<Response> {
    let cutoffs = parse_cutoffs(q.get("cutoffs").map_or(DEFAULT_CUTOFFS, String::as_str))?;
    let format: ReportFormat = q.get("format").map_or(Ok(ReportFormat::Json), |f| f.parse())?;
    let (name, truth) = labeled_truth(&st, &q)?;
    let docs: Vec<_> = st.detections().into_values().collect();
    let report = evaluate(&name, &document_scores(&docs), &truth, &cutoffs)?;
    let text = render_report(&report, format)?;
    Ok(match format {
        ReportFormat::Json => json_text(text),
        ReportFormat::Csv => ([(header::CONTENT_TYPE, "text/csv")], text).into_response(),
    })
}

pub async fn get_pr_curve(State(st): State<AppState>, Query(q): Params) -> ApiResult<Response> {
    let (_, truth) = labeled_truth(&st, &q)?;
    let docs: Vec<_> = st.detections().into_values().collect();
    let curve = pr_curve(&document_scores(&docs), &truth)?;
    Ok(Json(curve).into_response())
}

pub async fn not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed for this endpoint")
}
