//! Handwriting-detection data preparation and document-level scoring.

mod detector;
mod split;
mod voc;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Decision;

pub use detector::{detect_document, Detector, DetectorConfig, DetectorKind, DocumentRun, MockDetector, PageFailure};
pub use split::{split_rows, Split};
pub use voc::{parse_voc, rows_from_csv, rows_to_csv, voc_to_rows, AnnotationRow, VocAnnotation, VocObject, CSV_HEADER};

/// One detector candidate. `bbox` is `[xmin, ymin, xmax, ymax]` normalized to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    #[serde(rename = "class")]
    pub class_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageDetections {
    pub page_index: u32,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentDetections {
    pub doc_id: String,
    pub page_count: u32,
    pub pages: Vec<PageDetections>,
}

fn check_detection(doc: &str, page: u32, d: &Detection) -> Result<()> {
    if !(0.0..=1.0).contains(&d.score) {
        return Err(Error::Validation(format!(
            "document `{doc}` page {page}: score {} outside [0, 1]",
            d.score
        )));
    }
    let [x0, y0, x1, y1] = d.bbox;
    let unit = |v: f64| (0.0..=1.0).contains(&v);
    if !(x0 < x1 && y0 < y1 && [x0, y0, x1, y1].into_iter().all(unit)) {
        return Err(Error::Validation(format!(
            "document `{doc}` page {page}: box {:?} is not a normalized box with min < max",
            d.bbox
        )));
    }
    Ok(())
}

impl DocumentDetections {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for page in &self.pages {
            if !seen.insert(page.page_index) {
                return Err(Error::Validation(format!(
                    "document `{}`: duplicate page_index {}",
                    self.doc_id, page.page_index
                )));
            }
            if page.page_index >= self.page_count {
                return Err(Error::Validation(format!(
                    "document `{}`: page_index {} not below page_count {}",
                    self.doc_id, page.page_index, self.page_count
                )));
            }
            for d in &page.detections {
                check_detection(&self.doc_id, page.page_index, d)?;
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportFile {
    documents: Vec<ImportDocument>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportDocument {
    doc_id: String,
    page_count: u32,
    pages: Vec<ImportPage>,
}

/// Pages that carry `width`/`height` have pixel boxes.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportPage {
    page_index: u32,
    #[serde(default)]
    width: Option<f64>,
    #[serde(default)]
    height: Option<f64>,
    detections: Vec<Detection>,
}

/// Parses and validates the detection-import JSON document.
pub fn parse_detections(json: &[u8]) -> Result<Vec<DocumentDetections>> {
    let file: ImportFile = serde_json::from_slice(json)?;
    let mut out = Vec::with_capacity(file.documents.len());
    let mut ids = HashSet::new();
    for doc in file.documents {
        if !ids.insert(doc.doc_id.clone()) {
            return Err(Error::Validation(format!("document `{}` appears twice", doc.doc_id)));
        }
        let mut pages = Vec::with_capacity(doc.pages.len());
        for page in doc.pages {
            let scale = match (page.width, page.height) {
                (None, None) => None,
                (Some(w), Some(h)) if w > 0.0 && h > 0.0 => Some((w, h)),
                _ => {
                    return Err(Error::Validation(format!(
                        "document `{}` page {}: width and height must both be positive when given",
                        doc.doc_id, page.page_index
                    )))
                }
            };
            let detections = page
                .detections
                .into_iter()
                .map(|mut d| {
                    if let Some((w, h)) = scale {
                        d.bbox = [d.bbox[0] / w, d.bbox[1] / h, d.bbox[2] / w, d.bbox[3] / h];
                    }
                    d
                })
                .collect();
            pages.push(PageDetections {
                page_index: page.page_index,
                detections,
            });
        }
        let doc = DocumentDetections {
            doc_id: doc.doc_id,
            page_count: doc.page_count,
            pages,
        };
        doc.validate()?;
        out.push(doc);
    }
    Ok(out)
}

pub fn import_detections(path: impl AsRef<Path>) -> Result<Vec<DocumentDetections>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&bytes)
}

/// Serializes documents in the import format (boxes already normalized).
pub fn detections_to_json(docs: &[DocumentDetections]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&serde_json::json!({ "documents": docs }))?)
}

/// Maximum detection score over every page; 0.0 when there are none.
pub fn document_score(doc: &DocumentDetections) -> f64 {
    doc.pages
        .iter()
        .flat_map(|p| p.detections.iter().map(|d| d.score))
        .fold(0.0, f64::max)
}

pub fn document_scores(docs: &[DocumentDetections]) -> BTreeMap<String, f64> {
    docs.iter().map(|d| (d.doc_id.clone(), document_score(d))).collect()
}

/// The `{"doc_id": score}` JSON document written by scoring front ends.
pub fn render_scores(scores: &BTreeMap<String, f64>) -> Result<String> {
    let mut s = serde_json::to_string_pretty(scores)?;
    s.push('\n');
    Ok(s)
}

/// Positive iff score ≥ cutoff.
pub fn classify_documents(scores: &BTreeMap<String, f64>, cutoff: f64) -> Result<BTreeMap<String, Decision>> {
    if !(0.0..=1.0).contains(&cutoff) {
        return Err(Error::Config(format!("cutoff {cutoff} outside [0, 1]")));
    }
    Ok(scores
        .iter()
        .map(|(id, &s)| (id.clone(), Decision::at_cutoff(s, cutoff)))
        .collect())
}
