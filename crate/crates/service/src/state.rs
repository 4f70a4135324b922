use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use reviewlens_core::api::{DatasetSummary, JobKind};
use reviewlens_core::config::AppConfig;
use reviewlens_core::detection::{detections_to_json, parse_detections, DocumentDetections};
use reviewlens_core::store::{ImageManifest, ImageRecord, Label, LabelJournal};
use reviewlens_core::{Error, FeatureMode, Result};
use serde::{Deserialize, Serialize};

use crate::jobs::JobBook;

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Writes through a sibling temp file so readers never see a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    }
    let tmp = path.with_extension(format!("tmp-{}", uuid::Uuid::new_v4().simple()));
    std::fs::write(&tmp, bytes).map_err(|e| io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetMeta {
    id: String,
    seq: u64,
    cutoff: Option<f64>,
}

pub struct Dataset {
    pub id: String,
    seq: u64,
    dir: PathBuf,
    base: ImageManifest,
    current: RwLock<ImageManifest>,
    journal: LabelJournal,
    meta: Mutex<DatasetMeta>,
    /// Serializes every mutation of this dataset.
    mutation: Mutex<()>,
}

impl Dataset {
    fn create(dir: PathBuf, id: String, seq: u64, manifest: ImageManifest) -> Result<Self> {
        write_atomic(&dir.join("manifest.json"), manifest.to_json().as_bytes())?;
        let meta = DatasetMeta { id: id.clone(), seq, cutoff: None };
        write_atomic(&dir.join("meta.json"), &serde_json::to_vec_pretty(&meta)?)?;
        Ok(Self {
            id,
            seq,
            journal: LabelJournal::open(dir.join("labels.jsonl")),
            current: RwLock::new(manifest.clone()),
            base: manifest,
            meta: Mutex::new(meta),
            dir,
            mutation: Mutex::new(()),
        })
    }

    fn load(dir: PathBuf) -> Result<Self> {
        let meta: DatasetMeta = read_json(&dir.join("meta.json"))?;
        let text = std::fs::read_to_string(dir.join("manifest.json")).map_err(|e| io(&dir, e))?;
        let base = ImageManifest::from_json(&text)?;
        let journal = LabelJournal::open(dir.join("labels.jsonl"));
        let current = journal.replay(&base)?;
        Ok(Self {
            id: meta.id.clone(),
            seq: meta.seq,
            base,
            current: RwLock::new(current),
            journal,
            meta: Mutex::new(meta),
            dir,
            mutation: Mutex::new(()),
        })
    }

    pub fn manifest(&self) -> ImageManifest {
        self.current.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn image(&self, image_id: &str) -> Option<ImageRecord> {
        self.current
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(image_id)
            .cloned()
    }

    pub fn lock(&self) -> std::sync::MutexGuard<'_, ()> {
        self.mutation.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Journal first, then the in-memory view; journal order decides.
    pub fn set_label(&self, image_id: &str, label: Label) -> Result<()> {
        let _guard = self.lock();
        let mut current = self.current.write().unwrap_or_else(|p| p.into_inner());
        let next = reviewlens_core::store::apply_label(&current, image_id, label, &self.journal)?;
        *current = next;
        Ok(())
    }

    pub fn set_cutoff(&self, cutoff: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&cutoff) {
            return Err(Error::Config(format!("cutoff {cutoff} outside [0, 1]")));
        }
        let _guard = self.lock();
        let mut meta = self.meta.lock().unwrap_or_else(|p| p.into_inner());
        meta.cutoff = Some(cutoff);
        write_atomic(&self.dir.join("meta.json"), &serde_json::to_vec_pretty(&*meta)?)
    }

    pub fn features_path(&self, mode: FeatureMode) -> PathBuf {
        self.dir.join("features").join(format!("{}.fvs", mode.as_str()))
    }

    pub fn feature_modes(&self) -> Vec<FeatureMode> {
        [FeatureMode::Conv8192, FeatureMode::Fc2_4096]
            .into_iter()
            .filter(|m| self.features_path(*m).is_file())
            .collect()
    }

    pub fn summary(&self) -> DatasetSummary {
        let m = self.manifest();
        let count = |l: Label| m.images.iter().filter(|r| r.label == l).count();
        let mut docs: Vec<&str> = m.images.iter().filter_map(|r| r.doc_id.as_deref()).collect();
        docs.sort_unstable();
        docs.dedup();
        DatasetSummary {
            id: self.id.clone(),
            name: m.name.clone(),
            images: m.len(),
            documents: docs.len(),
            positive: count(Label::Positive),
            negative: count(Label::Negative),
            unlabeled: count(Label::Unlabeled),
            features: self.feature_modes(),
            cutoff: self.meta.lock().unwrap_or_else(|p| p.into_inner()).cutoff,
        }
    }

    pub fn base(&self) -> &ImageManifest {
        &self.base
    }
}

pub(crate) struct Inner {
    pub data_dir: PathBuf,
    pub config: AppConfig,
    datasets: RwLock<BTreeMap<String, Arc<Dataset>>>,
    next_seq: Mutex<u64>,
    detections: RwLock<BTreeMap<String, DocumentDetections>>,
    detections_lock: Mutex<()>,
    pub jobs: JobBook,
    job_locks: Mutex<HashMap<(String, JobKind), Arc<tokio::sync::Mutex<()>>>>,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState {
    pub(crate) inner: Arc<Inner>,
}

impl AppState {
    /// Opens (or initializes) a data directory. Jobs left queued or running
    /// by a previous process are re-queued; call `resume_jobs` inside a
    /// runtime to start them.
    pub fn open(config: AppConfig) -> Result<Self> {
        let data_dir = config.service.data_dir.clone();
        for sub in ["datasets", "clusterings", "models", "jobs"] {
            let d = data_dir.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| io(&d, e))?;
        }
        let mut datasets = BTreeMap::new();
        let mut next_seq = 0;
        let ds_dir = data_dir.join("datasets");
        for entry in std::fs::read_dir(&ds_dir).map_err(|e| io(&ds_dir, e))? {
            let entry = entry.map_err(|e| io(&ds_dir, e))?;
            if entry.path().join("meta.json").is_file() {
                let ds = Dataset::load(entry.path())?;
                next_seq = next_seq.max(ds.seq + 1);
                datasets.insert(ds.id.clone(), Arc::new(ds));
            }
        }
        let det_path = data_dir.join("detections.json");
        let detections = if det_path.is_file() {
            let bytes = std::fs::read(&det_path).map_err(|e| io(&det_path, e))?;
            parse_detections(&bytes)?
                .into_iter()
                .map(|d| (d.doc_id.clone(), d))
                .collect()
        } else {
            BTreeMap::new()
        };
        let jobs = JobBook::open(data_dir.join("jobs"))?;
        Ok(Self {
            inner: Arc::new(Inner {
                data_dir,
                config,
                datasets: RwLock::new(datasets),
                next_seq: Mutex::new(next_seq),
                detections: RwLock::new(detections),
                detections_lock: Mutex::new(()),
                jobs,
                job_locks: Mutex::new(HashMap::new()),
            }),
        })
    }

    pub fn config(&self) -> &AppConfig {
        &self.inner.config
    }

    pub fn data_dir(&self) -> &Path {
        &self.inner.data_dir
    }

    pub fn add_dataset(&self, manifest: ImageManifest) -> Result<Arc<Dataset>> {
        let seq = {
            let mut s = self.inner.next_seq.lock().unwrap_or_else(|p| p.into_inner());
            *s += 1;
            *s - 1
        };
        let id = format!("ds-{}", uuid::Uuid::new_v4().simple());
        let dir = self.inner.data_dir.join("datasets").join(&id);
        let ds = Arc::new(Dataset::create(dir, id.clone(), seq, manifest)?);
        self.inner
            .datasets
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, ds.clone());
        Ok(ds)
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<Dataset>> {
        self.inner
            .datasets
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("dataset `{id}`")))
    }

    /// Datasets in registration order.
    pub fn datasets(&self) -> Vec<Arc<Dataset>> {
        let mut all: Vec<_> = self
            .inner
            .datasets
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .values()
            .cloned()
            .collect();
        all.sort_by_key(|d| d.seq);
        all
    }

    /// First dataset (registration order) holding `image_id`, or the named one.
    pub fn find_image(&self, image_id: &str, dataset: Option<&str>) -> Result<(Arc<Dataset>, ImageRecord)> {
        let candidates = match dataset {
            Some(id) => vec![self.dataset(id)?],
            None => self.datasets(),
        };
        candidates
            .into_iter()
            .find_map(|ds| ds.image(image_id).map(|r| (ds, r)))
            .ok_or_else(|| Error::NotFound(format!("image `{image_id}`")))
    }

    /// Ground truth for evaluation: one dataset's, or every dataset's merged
    /// with earlier registrations winning.
    pub fn truth(&self, dataset: Option<&str>) -> Result<(String, HashMap<String, bool>)> {
        match dataset {
            Some(id) => {
                let m = self.dataset(id)?.manifest();
                Ok((m.name.clone(), m.truth()))
            }
            None => {
                let mut truth = HashMap::new();
                for ds in self.datasets() {
                    for (k, v) in ds.manifest().truth() {
                        truth.entry(k).or_insert(v);
                    }
                }
                Ok(("all".to_string(), truth))
            }
        }
    }

    pub fn import_detections(&self, docs: Vec<DocumentDetections>) -> Result<usize> {
        let _guard = self.inner.detections_lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut next = self.detections();
        let n = docs.len();
        for d in docs {
            next.insert(d.doc_id.clone(), d);
        }
        let all: Vec<DocumentDetections> = next.values().cloned().collect();
        write_atomic(
            &self.inner.data_dir.join("detections.json"),
            detections_to_json(&all)?.as_bytes(),
        )?;
        *self.inner.detections.write().unwrap_or_else(|p| p.into_inner()) = next;
        Ok(n)
    }

    pub fn detections(&self) -> BTreeMap<String, DocumentDetections> {
        self.inner
            .detections
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
    }

    pub(crate) fn job_lock(&self, dataset: &str, kind: JobKind) -> Arc<tokio::sync::Mutex<()>> {
        self.inner
            .job_locks
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .entry((dataset.to_string(), kind))
            .or_default()
            .clone()
    }

    pub fn clustering_path(&self, id: &str) -> PathBuf {
        self.inner.data_dir.join("clusterings").join(format!("{id}.json"))
    }

    pub fn model_dir(&self, id: &str) -> PathBuf {
        self.inner.data_dir.join("models").join(id)
    }
}

/// Rejects ids that could escape the data directory.
pub(crate) fn check_resource_id(id: &str) -> Result<()> {
    let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::NotFound(format!("`{id}`")))
    }
}
