use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
    #[default]
    Unlabeled,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
            Label::Unlabeled => "unlabeled",
        }
    }

    /// `Some(true)` for positive, `Some(false)` for negative.
    pub fn as_truth(self) -> Option<bool> {
        match self {
            Label::Positive => Some(true),
            Label::Negative => Some(false),
            Label::Unlabeled => None,
        }
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Label::Positive),
            "negative" => Ok(Label::Negative),
            "unlabeled" => Ok(Label::Unlabeled),
            other => Err(Error::Validation(format!("unknown label `{other}`"))),
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    pub id: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_index: Option<u32>,
    #[serde(default)]
    pub label: Label,
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Self {
            id: id.into(),
            path: path.into(),
            doc_id: None,
            page_index: None,
            label: Label::Unlabeled,
        }
    }

    pub fn page(mut self, doc_id: impl Into<String>, page_index: u32) -> Self {
        self.doc_id = Some(doc_id.into());
        self.page_index = Some(page_index);
        self
    }

    pub fn labeled(mut self, label: Label) -> Self {
        self.label = label;
        self
    }
}

/// Ordered catalog of corpus images. Values are never mutated in place;
/// label changes produce a new manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageManifest {
    pub name: String,
    pub images: Vec<ImageRecord>,
}

#[derive(Deserialize)]
struct RawManifest {
    name: String,
    images: Vec<serde_json::Value>,
}

impl ImageManifest {
    pub fn new(name: impl Into<String>, images: Vec<ImageRecord>) -> Result<Self> {
        let m = Self {
            name: name.into(),
            images,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|r| r.id == id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.images.iter().position(|r| r.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::with_capacity(self.images.len());
        let mut pages: HashMap<&str, HashSet<u32>> = HashMap::new();
        for (i, rec) in self.images.iter().enumerate() {
            if rec.id.is_empty() {
                return Err(Error::Validation(format!("record {i} has an empty id")));
            }
            if !ids.insert(rec.id.as_str()) {
                return Err(Error::Validation(format!("duplicate image id `{}`", rec.id)));
            }
            match (&rec.doc_id, rec.page_index) {
                (Some(doc), Some(page)) => {
                    if !pages.entry(doc.as_str()).or_default().insert(page) {
                        return Err(Error::Validation(format!(
                            "document `{doc}` has page_index {page} more than once"
                        )));
                    }
                }
                (None, None) => {}
                _ => {
                    return Err(Error::Validation(format!(
                        "image `{}`: page_index and doc_id must be given together",
                        rec.id
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawManifest = serde_json::from_str(text).map_err(|e| Error::MalformedManifest {
            index: None,
            message: e.to_string(),
        })?;
        let mut images = Vec::with_capacity(raw.images.len());
        for (index, value) in raw.images.into_iter().enumerate() {
            let rec: ImageRecord =
                serde_json::from_value(value).map_err(|e| Error::MalformedManifest {
                    index: Some(index),
                    message: e.to_string(),
                })?;
            images.push(rec);
        }
        Self::new(raw.name, images)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Appends records, rejecting the batch if the result violates any invariant.
    pub fn append(&self, records: impl IntoIterator<Item = ImageRecord>) -> Result<Self> {
        let mut next = self.clone();
        next.images.extend(records);
        next.validate()?;
        Ok(next)
    }

    /// Copy with one record's label replaced.
    pub fn with_label(&self, image_id: &str, label: Label) -> Result<Self> {
        let idx = self
            .position(image_id)
            .ok_or_else(|| Error::NotFound(format!("image `{image_id}`")))?;
        let mut next = self.clone();
        next.images[idx].label = label;
        Ok(next)
    }

    /// Ground truth per image id, plus one entry per document: a document is
    /// positive when any labeled page is positive, negative when all labeled
    /// pages are negative. Unlabeled images contribute nothing.
    pub fn truth(&self) -> HashMap<String, bool> {
        let mut truth = HashMap::new();
        let mut docs: HashMap<&str, bool> = HashMap::new();
        for rec in &self.images {
            let Some(t) = rec.label.as_truth() else { continue };
            truth.insert(rec.id.clone(), t);
            if let Some(doc) = &rec.doc_id {
                *docs.entry(doc.as_str()).or_insert(false) |= t;
            }
        }
        for (doc, t) in docs {
            truth.entry(doc.to_string()).or_insert(t);
        }
        truth
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<ImageManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ImageManifest::from_json(&text)
}

pub fn save_manifest(manifest: &ImageManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, manifest.to_json()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> String {
        r#"{"name": "t", "images": [
            {"id": "a", "path": "a.png", "label": "positive"},
            {"id": "b", "path": "b.png", "doc_id": "d1", "page_index": 0, "label": "unlabeled"},
            {"id": "c", "path": "c.png", "doc_id": "d1", "page_index": 1, "label": "negative"}
        ]}"#
        .to_string()
    }

    #[test]
    fn loads_in_order() {
        let m = ImageManifest::from_json(&three()).unwrap();
        let ids: Vec<_> = m.images.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(m.images[2].page_index, Some(1));
    }

    #[test]
    fn duplicate_id_rejected() {
        let text = r#"{"name": "t", "images": [
            {"id": "a", "path": "1.png", "label": "positive"},
            {"id": "a", "path": "2.png", "label": "negative"}]}"#;
        let err = ImageManifest::from_json(text).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("\"a\"") || m.contains("`a`")));
    }

    #[test]
    fn page_without_doc_rejected() {
        let text = r#"{"name": "t", "images": [{"id": "a", "path": "1.png", "page_index": 2, "label": "unlabeled"}]}"#;
        assert!(matches!(
            ImageManifest::from_json(text),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn repeated_page_rejected() {
        let text = r#"{"name": "t", "images": [
            {"id": "a", "path": "1.png", "doc_id": "d", "page_index": 0, "label": "unlabeled"},
            {"id": "b", "path": "2.png", "doc_id": "d", "page_index": 0, "label": "unlabeled"}]}"#;
        assert!(matches!(
            ImageManifest::from_json(text),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn malformed_record_names_index() {
        let text = r#"{"name": "t", "images": [
            {"id": "a", "path": "1.png", "label": "positive"},
            {"id": "b", "path": "2.png", "label": "maybe"}]}"#;
        match ImageManifest::from_json(text) {
            Err(Error::MalformedManifest { index, .. }) => assert_eq!(index, Some(1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let m = ImageManifest::from_json(&three()).unwrap();
        assert_eq!(ImageManifest::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn document_truth_is_any_positive() {
        let m = ImageManifest::new(
            "t",
            vec![
                ImageRecord::new("p0", "x").page("d", 0).labeled(Label::Negative),
                ImageRecord::new("p1", "x").page("d", 1).labeled(Label::Positive),
                ImageRecord::new("q0", "x").page("e", 0).labeled(Label::Negative),
                ImageRecord::new("r0", "x").page("f", 0),
            ],
        )
        .unwrap();
        let t = m.truth();
        assert_eq!(t["d"], true);
        assert_eq!(t["e"], false);
        assert!(!t.contains_key("f"));
        assert!(!t.contains_key("r0"));
    }
}
