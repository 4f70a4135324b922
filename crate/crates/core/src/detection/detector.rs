use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Detection, DocumentDetections, PageDetections};
use crate::backbone::onnx::OnnxDetector;
use crate::error::{Error, Result};
use crate::store::ImageRecord;

/// Produces zero or more scored candidates for one page image.
pub trait Detector: Send + Sync {
    fn detect(&self, page_bytes: &[u8]) -> Result<Vec<Detection>>;
}

/// Deterministic stand-in keyed by (page bytes, seed): 0–3 candidates.
#[derive(Debug, Clone)]
pub struct MockDetector {
    seed: u64,
}

impl MockDetector {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl Detector for MockDetector {
    fn detect(&self, page_bytes: &[u8]) -> Result<Vec<Detection>> {
        let mut h = Sha256::new();
        h.update(b"reviewlens-mock-detector\0");
        h.update(self.seed.to_le_bytes());
        h.update(page_bytes);
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        let n = rng.random_range(0..=3);
        Ok((0..n)
            .map(|_| {
                let x0 = rng.random_range(0.0..0.8);
                let y0 = rng.random_range(0.0..0.8);
                let w = rng.random_range(0.05..0.2);
                let h = rng.random_range(0.05..0.2);
                Detection {
                    score: rng.random_range(0.0..=1.0),
                    bbox: [x0, y0, x0 + w, y0 + h],
                    class_name: "handwriting".into(),
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Pretrained,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl DetectorConfig {
    pub fn mock(seed: u64) -> Self {
        Self {
            kind: DetectorKind::Mock,
            model_path: None,
            seed,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Detector>> {
        match (self.kind, &self.model_path) {
            (DetectorKind::Mock, None) => Ok(Box::new(MockDetector::new(self.seed))),
            (DetectorKind::Pretrained, Some(path)) => Ok(Box::new(OnnxDetector::load(path)?)),
            (DetectorKind::Mock, Some(_)) => Err(Error::Config("mock detector does not take a model_path".into())),
            (DetectorKind::Pretrained, None) => Err(Error::Config("pretrained detector requires model_path".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageFailure {
    pub page_index: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRun {
    pub detections: DocumentDetections,
    /// Pages excluded from scoring because reading or detection failed.
    pub failures: Vec<PageFailure>,
}

impl DocumentRun {
    pub fn is_flagged(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// Runs the detector over every page of one document. Pages run in
/// parallel; output is in page order. A failing page is recorded and left
/// out rather than failing the whole document.
pub fn detect_document(pages: &[ImageRecord], detector: &dyn Detector) -> Result<DocumentRun> {
    let doc_id = match pages.first().and_then(|p| p.doc_id.clone()) {
        Some(d) => d,
        None => return Err(Error::Validation("pages must belong to a document".into())),
    };
    if let Some(p) = pages.iter().find(|p| p.doc_id.as_deref() != Some(&doc_id)) {
        return Err(Error::Validation(format!(
            "image `{}` is not a page of document `{doc_id}`",
            p.id
        )));
    }
    let mut ordered: Vec<&ImageRecord> = pages.iter().collect();
    ordered.sort_by_key(|p| p.page_index);
    let page_count = ordered.last().and_then(|p| p.page_index).map_or(0, |i| i + 1);

    let results: Vec<(u32, Result<Vec<Detection>>)> = ordered
        .par_iter()
        .map(|p| {
            let idx = p.page_index.expect("doc pages have an index");
            let out = std::fs::read(&p.path)
                .map_err(|e| Error::io(&p.path, e))
                .and_then(|bytes| detector.detect(&bytes))
                .and_then(|dets| {
                    let page = PageDetections { page_index: idx, detections: dets };
                    for d in &page.detections {
                        super::check_detection(&doc_id, idx, d)?;
                    }
                    Ok(page.detections)
                });
            (idx, out)
        })
        .collect();

    let mut out = DocumentDetections {
        doc_id,
        page_count,
        pages: Vec::with_capacity(results.len()),
    };
    let mut failures = Vec::new();
    for (page_index, r) in results {
        match r {
            Ok(detections) => out.pages.push(PageDetections { page_index, detections }),
            Err(e) => failures.push(PageFailure {
                page_index,
                message: e.to_string(),
            }),
        }
    }
    Ok(DocumentRun {
        detections: out,
        failures,
    })
}
