//! Wire types of the `/api/v1` HTTP surface, shared by server and client.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::backbone::BackboneKind;
use crate::features::FeatureMode;
use crate::head::{TrainConfig, TrainHistory};
use crate::store::Label;
use crate::Decision;

pub const API_PREFIX: &str = "/api/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub status: u16,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub id: String,
    pub name: String,
    pub images: usize,
    pub documents: usize,
    pub positive: usize,
    pub negative: usize,
    pub unlabeled: usize,
    /// Feature modes already extracted for this dataset.
    pub features: Vec<FeatureMode>,
    /// Review cutoff chosen for downstream triage, if any.
    pub cutoff: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffRequest {
    pub cutoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesRequest {
    pub mode: FeatureMode,
    /// Defaults to the service's configured backbone.
    #[serde(default)]
    pub backbone: Option<BackboneKind>,
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringRequest {
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to `conv8192` when extracted, else `fc2_4096`.
    #[serde(default)]
    pub mode: Option<FeatureMode>,
    #[serde(default)]
    pub restarts: Option<usize>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    #[serde(default)]
    pub config: TrainConfig,
    #[serde(default)]
    pub mode: Option<FeatureMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Extract,
    Cluster,
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub progress: f64,
    /// Id of the produced resource; present iff `state` is done.
    pub result_ref: Option<String>,
    pub error: Option<String>,
    pub dataset_id: String,
    /// Original request body, kept so queued jobs survive a restart.
    pub request: serde_json::Value,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub dataset_id: String,
    pub mode: FeatureMode,
    pub param_count: usize,
    pub config: TrainConfig,
    pub metrics: TrainHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub image_ids: Vec<String>,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
}

fn default_cutoff() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub image_id: String,
    pub probability: f64,
    pub label: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportSummary {
    pub documents: usize,
}
