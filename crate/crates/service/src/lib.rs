//! HTTP/JSON service under `/api/v1`.

mod error;
mod jobs;
mod routes;
mod state;
mod work;

use axum::routing::{get, post, put};
use axum::Router;
use reviewlens_core::api::API_PREFIX;

pub use error::{ApiError, ApiResult};
pub use jobs::JobBook;
pub use routes::DEFAULT_CUTOFFS;
pub use state::{AppState, Dataset};

pub fn router(state: AppState) -> Router {
    use routes::*;
    let api = Router::new()
        .route("/health", get(health))
        .route("/datasets", post(create_dataset).get(list_datasets))
        .route("/datasets/{id}", get(get_dataset))
        .route("/datasets/{id}/images", get(get_dataset_images))
        .route("/datasets/{id}/cutoff", put(put_cutoff))
        .route("/datasets/{id}/features", post(post_features))
        .route("/datasets/{id}/clusterings", post(post_clustering))
        .route("/datasets/{id}/train", post(post_train))
        .route("/images/{id}", get(get_image))
        .route("/images/{id}/label", put(put_label))
        .route("/jobs/{id}", get(get_job))
        .route("/clusterings/{id}", get(get_clustering))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/predict", post(post_predict))
        .route("/detections/import", post(import_detections))
        .route("/documents/scores", get(get_scores))
        .route("/documents/{doc_id}/detections", get(get_document_detections))
        .route("/evaluations", get(get_evaluations))
        .route("/evaluations/pr-curve", get(get_pr_curve))
        .method_not_allowed_fallback(method_not_allowed);
    Router::new()
        .nest(API_PREFIX, api)
        .fallback(not_found)
        .with_state(state)
}

/// Starts every job left queued by an earlier process.
pub fn resume_jobs(state: &AppState) {
    for rec in state.inner.jobs.queued() {
        jobs::spawn(state.clone(), rec.id);
    }
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    resume_jobs(&state);
    axum::serve(listener, router(state)).await
}
