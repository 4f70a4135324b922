//! Typed client for the reviewlens `/api/v1` service.

use std::collections::BTreeMap;
use std::time::Duration;

use reqwest::{Method, RequestBuilder, Response, Url};
use reviewlens_core::api::{
    ApiErrorBody, ClusteringRequest, Created, CutoffRequest, DatasetSummary, FeaturesRequest, Health, ImportSummary,
    JobRecord, LabelRequest, ModelInfo, PredictRequest, PredictResponse, TrainRequest,
};
use reviewlens_core::clustering::ClusterGallery;
use reviewlens_core::detection::DocumentDetections;
use reviewlens_core::evaluation::{PrCurve, ReportFormat};
use reviewlens_core::store::{ImageManifest, Label};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{}: {}", .0.code, .0.message)]
    Api(ApiErrorBody),
    #[error("unexpected {status} response: {body}")]
    Unexpected { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("bad service url: {0}")]
    Url(String),
    #[error("job {id} did not finish within {waited:?}")]
    Timeout { id: String, waited: Duration },
}

impl ClientError {
    /// HTTP status, when the service answered.
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api(b) => Some(b.status),
            ClientError::Unexpected { status, .. } => Some(*status),
            _ => None,
        }
    }

    pub fn code(&self) -> &str {
        match self {
            ClientError::Api(b) => &b.code,
            ClientError::Unexpected { .. } => "unexpected_response",
            ClientError::Transport(_) => "transport",
            ClientError::Url(_) => "url",
            ClientError::Timeout { .. } => "timeout",
        }
    }
}

pub type Result<T, E = ClientError> = std::result::Result<T, E>;

#[derive(Debug, Clone)]
pub struct Client {
    base: Url,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8710`.
    pub fn new(base: &str) -> Result<Self> {
        let base = Url::parse(base).map_err(|e| ClientError::Url(format!("{base}: {e}")))?;
        if base.cannot_be_a_base() {
            return Err(ClientError::Url(format!("{base} cannot be a base url")));
        }
        Ok(Self {
            base,
            http: reqwest::Client::new(),
        })
    }

    fn url(&self, segments: &[&str], query: &[(&str, &str)]) -> Url {
        let mut url = self.base.clone();
        {
            let mut path = url.path_segments_mut().expect("checked in new");
            path.pop_if_empty().extend(["api", "v1"]).extend(segments);
        }
        if !query.is_empty() {
            url.query_pairs_mut().extend_pairs(query);
        }
        url
    }

    fn request(&self, method: Method, segments: &[&str], query: &[(&str, &str)]) -> RequestBuilder {
        self.http.request(method, self.url(segments, query))
    }

    async fn check(resp: Response) -> Result<Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let body = resp.text().await?;
        Err(match serde_json::from_str::<ApiErrorBody>(&body) {
            Ok(api) => ClientError::Api(api),
            Err(_) => ClientError::Unexpected {
                status: status.as_u16(),
                body,
            },
        })
    }

    async fn json<T: DeserializeOwned>(rb: RequestBuilder) -> Result<T> {
        Ok(Self::check(rb.send().await?).await?.json().await?)
    }

    async fn text(rb: RequestBuilder) -> Result<String> {
        Ok(Self::check(rb.send().await?).await?.text().await?)
    }

    async fn empty(rb: RequestBuilder) -> Result<()> {
        Self::check(rb.send().await?).await.map(drop)
    }

    fn with_json(rb: RequestBuilder, body: &impl Serialize) -> RequestBuilder {
        rb.json(body)
    }

    pub async fn health(&self) -> Result<Health> {
        Self::json(self.request(Method::GET, &["health"], &[])).await
    }

    pub async fn create_dataset(&self, manifest: &ImageManifest) -> Result<Created> {
        let rb = self
            .request(Method::POST, &["datasets"], &[])
            .header("content-type", "application/json")
            .body(manifest.to_json());
        Self::json(rb).await
    }

    pub async fn datasets(&self) -> Result<Vec<DatasetSummary>> {
        Self::json(self.request(Method::GET, &["datasets"], &[])).await
    }

    pub async fn dataset(&self, id: &str) -> Result<DatasetSummary> {
        Self::json(self.request(Method::GET, &["datasets", id], &[])).await
    }

    pub async fn dataset_images(&self, id: &str) -> Result<ImageManifest> {
        Self::json(self.request(Method::GET, &["datasets", id, "images"], &[])).await
    }

    pub async fn set_cutoff(&self, dataset: &str, cutoff: f64) -> Result<()> {
        let rb = self.request(Method::PUT, &["datasets", dataset, "cutoff"], &[]);
        Self::empty(Self::with_json(rb, &CutoffRequest { cutoff })).await
    }

    fn dataset_query(dataset: Option<&str>) -> Vec<(&str, &str)> {
        dataset.map(|d| ("dataset", d)).into_iter().collect()
    }

    pub async fn image_bytes(&self, image_id: &str, dataset: Option<&str>) -> Result<Vec<u8>> {
        let rb = self.request(Method::GET, &["images", image_id], &Self::dataset_query(dataset));
        Ok(Self::check(rb.send().await?).await?.bytes().await?.to_vec())
    }

    pub async fn set_label(&self, image_id: &str, label: Label, dataset: Option<&str>) -> Result<()> {
        let rb = self.request(Method::PUT, &["images", image_id, "label"], &Self::dataset_query(dataset));
        Self::empty(Self::with_json(rb, &LabelRequest { label })).await
    }

    pub async fn start_features(&self, dataset: &str, req: &FeaturesRequest) -> Result<JobRecord> {
        let rb = self.request(Method::POST, &["datasets", dataset, "features"], &[]);
        Self::json(Self::with_json(rb, req)).await
    }

    pub async fn start_clustering(&self, dataset: &str, req: &ClusteringRequest) -> Result<JobRecord> {
        let rb = self.request(Method::POST, &["datasets", dataset, "clusterings"], &[]);
        Self::json(Self::with_json(rb, req)).await
    }

    pub async fn start_training(&self, dataset: &str, req: &TrainRequest) -> Result<JobRecord> {
        let rb = self.request(Method::POST, &["datasets", dataset, "train"], &[]);
        Self::json(Self::with_json(rb, req)).await
    }

    pub async fn job(&self, id: &str) -> Result<JobRecord> {
        Self::json(self.request(Method::GET, &["jobs", id], &[])).await
    }

    /// Polls until the job is done or failed.
    pub async fn wait_job(&self, id: &str, poll: Duration, limit: Duration) -> Result<JobRecord> {
        let start = std::time::Instant::now();
        loop {
            let rec = self.job(id).await?;
            if rec.state.is_terminal() {
                return Ok(rec);
            }
            if start.elapsed() > limit {
                return Err(ClientError::Timeout {
                    id: id.to_string(),
                    waited: start.elapsed(),
                });
            }
            tokio::time::sleep(poll).await;
        }
    }

    pub async fn clustering(&self, id: &str) -> Result<ClusterGallery> {
        Self::json(self.request(Method::GET, &["clusterings", id], &[])).await
    }

    /// The gallery document exactly as stored.
    pub async fn clustering_text(&self, id: &str) -> Result<String> {
        Self::text(self.request(Method::GET, &["clusterings", id], &[])).await
    }

    pub async fn model(&self, id: &str) -> Result<ModelInfo> {
        Self::json(self.request(Method::GET, &["models", id], &[])).await
    }

    pub async fn predict(&self, model: &str, req: &PredictRequest) -> Result<PredictResponse> {
        let rb = self.request(Method::POST, &["models", model, "predict"], &[]);
        Self::json(Self::with_json(rb, req)).await
    }

    /// Sends an import document as-is; the service validates it.
    pub async fn import_detections(&self, json: Vec<u8>) -> Result<ImportSummary> {
        let rb = self
            .request(Method::POST, &["detections", "import"], &[])
            .header("content-type", "application/json")
            .body(json);
        Self::json(rb).await
    }

    pub async fn scores(&self) -> Result<BTreeMap<String, f64>> {
        Self::json(self.request(Method::GET, &["documents", "scores"], &[])).await
    }

    pub async fn scores_text(&self) -> Result<String> {
        Self::text(self.request(Method::GET, &["documents", "scores"], &[])).await
    }

    pub async fn document_detections(&self, doc_id: &str) -> Result<DocumentDetections> {
        Self::json(self.request(Method::GET, &["documents", doc_id, "detections"], &[])).await
    }

    /// The evaluation report rendered by the service, byte for byte.
    pub async fn evaluation_report(&self, cutoffs: &[f64], dataset: Option<&str>, format: ReportFormat) -> Result<String> {
        let cutoffs = cutoffs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        let format = match format {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        };
        let mut query = vec![("cutoffs", cutoffs.as_str()), ("format", format)];
        query.extend(Self::dataset_query(dataset));
        Self::text(self.request(Method::GET, &["evaluations"], &query)).await
    }

    pub async fn pr_curve(&self, dataset: Option<&str>) -> Result<PrCurve> {
        Self::json(self.request(Method::GET, &["evaluations", "pr-curve"], &Self::dataset_query(dataset))).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_are_escaped() {
        let c = Client::new("http://localhost:8710").unwrap();
        let u = c.url(&["images", "doc/page-0", "label"], &[("dataset", "ds 1")]);
        assert_eq!(u.as_str(), "http://localhost:8710/api/v1/images/doc%2Fpage-0/label?dataset=ds+1");
    }

    #[test]
    fn base_with_trailing_slash() {
        let c = Client::new("http://localhost:8710/").unwrap();
        assert_eq!(c.url(&["health"], &[]).as_str(), "http://localhost:8710/api/v1/health");
    }

    #[test]
    fn rejects_non_base_url() {
        assert!(Client::new("mailto:x@y").is_err());
        assert!(Client::new("not a url").is_err());
    }
}
