//! Job bodies. Each runs on a blocking thread and returns the id of what it produced.

use reviewlens_core::api::{ClusteringRequest, FeaturesRequest, JobKind, JobRecord, ModelInfo, TrainRequest};
use reviewlens_core::backbone::{BackboneConfig, BackboneKind};
use reviewlens_core::clustering::{export_cluster_gallery, kmeans_fit, ClusterConfig};
use reviewlens_core::head::{save_head, train_head_with_progress, TrainedHead};
use reviewlens_core::pipeline::{extract_manifest, labeled_subset};
use reviewlens_core::store::{feature_store_read, feature_store_write};
use reviewlens_core::{Error, FeatureMatrix, FeatureMode, Result};

use crate::state::{write_atomic, AppState, Dataset};

pub(crate) fn execute(state: &AppState, rec: &JobRecord, progress: &(dyn Fn(f64) + Sync)) -> Result<String> {
    let ds = state.dataset(&rec.dataset_id)?;
    let req = rec.request.clone();
    match rec.kind {
        JobKind::Extract => extract(state, &ds, &serde_json::from_value(req)?, progress),
        JobKind::Cluster => cluster(state, &ds, &serde_json::from_value(req)?),
        JobKind::Train => train(state, &ds, &serde_json::from_value(req)?, progress),
    }
}

pub(crate) fn backbone_for(state: &AppState, req: &FeaturesRequest) -> Result<BackboneConfig> {
    let mut cfg = state.config().backbone.clone();
    if let Some(kind) = req.backbone {
        cfg.kind = kind;
        if kind == BackboneKind::Mock {
            cfg.model_path = None;
        }
    }
    if req.model_path.is_some() {
        cfg.model_path = req.model_path.clone();
    }
    cfg.seed = req.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn extract(state: &AppState, ds: &Dataset, req: &FeaturesRequest, progress: &(dyn Fn(f64) + Sync)) -> Result<String> {
    let cfg = backbone_for(state, req)?;
    let manifest = ds.manifest();
    let (ids, features) = extract_manifest(&manifest, &cfg, req.mode, progress)?;
    let path = ds.features_path(req.mode);
    let tmp = path.with_extension("fvs.partial");
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    feature_store_write(&tmp, &ids, &features)?;
    let _guard = ds.lock();
    std::fs::rename(&tmp, &path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    Ok(format!("{}:{}", ds.id, req.mode))
}

/// `conv8192` when extracted, else `fc2_4096`.
pub(crate) fn default_mode(ds: &Dataset) -> FeatureMode {
    ds.feature_modes().into_iter().next().unwrap_or(FeatureMode::Conv8192)
}

pub(crate) fn load_features(ds: &Dataset, mode: FeatureMode) -> Result<(Vec<String>, FeatureMatrix)> {
    let path = ds.features_path(mode);
    if !path.is_file() {
        return Err(Error::NotFound(format!(
            "dataset `{}` has no {mode} features; extract them first",
            ds.id
        )));
    }
    feature_store_read(path)
}

pub(crate) fn cluster_config(req: &ClusteringRequest) -> ClusterConfig {
    let mut cfg = ClusterConfig::new(req.k, req.seed);
    if let Some(r) = req.restarts {
        cfg.restarts = r;
    }
    if let Some(m) = req.max_iterations {
        cfg.max_iterations = m;
    }
    if let Some(t) = req.tolerance {
        cfg.tolerance = t;
    }
    cfg
}

fn cluster(state: &AppState, ds: &Dataset, req: &ClusteringRequest) -> Result<String> {
    let mode = req.mode.unwrap_or_else(|| default_mode(ds));
    let (ids, points) = load_features(ds, mode)?;
    let model = kmeans_fit(&points, &cluster_config(req))?;
    let gallery = export_cluster_gallery(&model, &ids, &points, &ds.manifest())?;
    let id = format!("cl-{}", uuid::Uuid::new_v4().simple());
    write_atomic(&state.clustering_path(&id), &serde_json::to_vec_pretty(&gallery)?)?;
    Ok(id)
}

fn train(state: &AppState, ds: &Dataset, req: &TrainRequest, progress: &(dyn Fn(f64) + Sync)) -> Result<String> {
    let mode = req.mode.unwrap_or(FeatureMode::Conv8192);
    let (ids, features) = load_features(ds, mode)?;
    let set = labeled_subset(&ds.manifest(), &ids, &features)?;
    let epochs = req.config.epochs.max(1) as f64;
    let (params, history) = train_head_with_progress(&set.features, &set.labels, &req.config, |rec| {
        progress(rec.epoch as f64 / epochs)
    })?;
    let id = format!("md-{}", uuid::Uuid::new_v4().simple());
    let dir = state.model_dir(&id);
    let info = ModelInfo {
        id: id.clone(),
        dataset_id: ds.id.clone(),
        mode,
        param_count: params.param_count(),
        config: req.config.clone(),
        metrics: history.clone(),
    };
    save_head(
        &dir,
        &TrainedHead {
            config: req.config.clone(),
            metrics: history,
            params,
        },
    )?;
    write_atomic(&dir.join("info.json"), &serde_json::to_vec_pretty(&info)?)?;
    Ok(id)
}
