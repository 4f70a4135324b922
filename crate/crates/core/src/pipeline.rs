//! Whole-dataset workflows shared by the CLI and the service.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::backbone::{extract_features, BackboneConfig, ImageTensor};
use crate::error::{Error, Result};
use crate::evaluation::{pr_curve, threshold_table, EvaluationReport};
use crate::features::{FeatureMatrix, FeatureMode};
use crate::store::ImageManifest;

/// Preprocesses and embeds every manifest image, in manifest order.
/// `progress` receives the completed fraction after each chunk.
pub fn extract_manifest(
    manifest: &ImageManifest,
    config: &BackboneConfig,
    mode: FeatureMode,
    progress: &(dyn Fn(f64) + Sync),
) -> Result<(Vec<String>, FeatureMatrix)> {
    let backbone = config.build()?;
    let pre = config.preprocessor();
    let chunk = (config.batch_size * rayon::current_num_threads()).max(1);
    let total = manifest.len().max(1) as f64;
    let mut out = FeatureMatrix::with_capacity(mode.dim(), manifest.len());
    let mut done = 0;
    for records in manifest.images.chunks(chunk) {
        let tensors: Vec<ImageTensor> = records
            .par_iter()
            .map(|r| {
                let bytes = std::fs::read(&r.path).map_err(|e| Error::io(&r.path, e))?;
                pre.preprocess(&bytes, mode).map_err(|e| match e {
                    Error::Decode(m) => Error::Decode(format!("image `{}`: {m}", r.id)),
                    Error::InvalidImage(m) => Error::InvalidImage(format!("image `{}`: {m}", r.id)),
                    other => other,
                })
            })
            .collect::<Result<_>>()?;
        let rows = extract_features(&tensors, backbone.as_ref(), mode, config.batch_size)?;
        for row in rows.iter_rows() {
            out.push_row(row)?;
        }
        done += records.len();
        progress(done as f64 / total);
    }
    let ids = manifest.images.iter().map(|r| r.id.clone()).collect();
    Ok((ids, out))
}

/// Rows of `features` whose image carries a positive or negative label.
pub struct LabeledSet {
    pub ids: Vec<String>,
    pub features: FeatureMatrix,
    pub labels: Vec<bool>,
}

pub fn labeled_subset(manifest: &ImageManifest, ids: &[String], features: &FeatureMatrix) -> Result<LabeledSet> {
    if ids.len() != features.rows() {
        return Err(Error::Dimension(format!("{} ids for {} feature rows", ids.len(), features.rows())));
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut kept = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        if let Some(t) = manifest.get(id).and_then(|r| r.label.as_truth()) {
            rows.push(i);
            labels.push(t);
            kept.push(id.clone());
        }
    }
    Ok(LabeledSet {
        ids: kept,
        features: features.select(&rows),
        labels,
    })
}

/// Rows for `wanted` ids, in the order given.
pub fn rows_for(ids: &[String], features: &FeatureMatrix, wanted: &[String]) -> Result<FeatureMatrix> {
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let rows = wanted
        .iter()
        .map(|w| {
            index
                .get(w.as_str())
                .copied()
                .ok_or_else(|| Error::NotFound(format!("no features for image `{w}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(features.select(&rows))
}

/// Threshold table plus PR curve. The curve is left empty when no scored
/// item is a positive.
pub fn evaluate(
    dataset: &str,
    scores: &BTreeMap<String, f64>,
    truth: &HashMap<String, bool>,
    cutoffs: &[f64],
) -> Result<EvaluationReport> {
    let table = threshold_table(scores, truth, cutoffs)?;
    let positives = scores.keys().filter(|id| truth.get(*id) == Some(&true)).count();
    let pr_curve = match pr_curve(scores, truth) {
        Ok(c) => c.points,
        Err(Error::UndefinedRecall) => Vec::new(),
        Err(e) => return Err(e),
    };
    Ok(EvaluationReport {
        dataset: dataset.to_string(),
        n: scores.len(),
        positives,
        table,
        pr_curve,
    })
}

pub fn parse_cutoffs(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|c| {
            let c = c.trim();
            c.parse::<f64>()
                .ok()
                .filter(|v| (0.0..=1.0).contains(v))
                .ok_or_else(|| Error::Config(format!("cutoff `{c}` is not a number in [0, 1]")))
        })
        .collect()
}
