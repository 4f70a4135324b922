use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;

use reviewlens_core::api::{JobKind, JobRecord, JobState};
use reviewlens_core::{Error, Result};

use crate::state::{read_json, write_atomic, AppState};

/// Durable job records, one JSON file each.
pub struct JobBook {
    dir: PathBuf,
    records: Mutex<HashMap<String, JobRecord>>,
}

impl JobBook {
    /// Loads every record; anything that was queued or running goes back to queued.
    pub fn open(dir: PathBuf) -> Result<Self> {
        let mut records = HashMap::new();
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let mut rec: JobRecord = read_json(&path)?;
            if rec.state == JobState::Running {
                rec.state = JobState::Queued;
                rec.progress = 0.0;
                write_atomic(&path, &serde_json::to_vec_pretty(&rec)?)?;
            }
            records.insert(rec.id.clone(), rec);
        }
        Ok(Self {
            dir,
            records: Mutex::new(records),
        })
    }

    fn persist(&self, rec: &JobRecord) -> Result<()> {
        write_atomic(&self.dir.join(format!("{}.json", rec.id)), &serde_json::to_vec_pretty(rec)?)
    }

    pub fn create(&self, kind: JobKind, dataset_id: &str, request: serde_json::Value) -> Result<JobRecord> {
        let rec = JobRecord {
            id: format!("job-{}", uuid::Uuid::new_v4().simple()),
            kind,
            state: JobState::Queued,
            progress: 0.0,
            result_ref: None,
            error: None,
            dataset_id: dataset_id.to_string(),
            request,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true),
        };
        self.persist(&rec)?;
        self.records
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(rec.id.clone(), rec.clone());
        Ok(rec)
    }

    pub fn get(&self, id: &str) -> Option<JobRecord> {
        self.records.lock().unwrap_or_else(|p| p.into_inner()).get(id).cloned()
    }

    /// Queued jobs, oldest first.
    pub fn queued(&self) -> Vec<JobRecord> {
        let mut q: Vec<JobRecord> = self
            .records
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .values()
            .filter(|r| r.state == JobState::Queued)
            .cloned()
            .collect();
        q.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.id.cmp(&b.id)));
        q
    }

    fn transition(&self, id: &str, f: impl FnOnce(&mut JobRecord)) -> Result<()> {
        let rec = {
            let mut all = self.records.lock().unwrap_or_else(|p| p.into_inner());
            let rec = all
                .get_mut(id)
                .ok_or_else(|| Error::NotFound(format!("job `{id}`")))?;
            f(rec);
            rec.clone()
        };
        self.persist(&rec)
    }

    /// In-memory only; progress is not worth a disk write.
    pub fn set_progress(&self, id: &str, progress: f64) {
        if let Some(rec) = self.records.lock().unwrap_or_else(|p| p.into_inner()).get_mut(id) {
            if rec.state == JobState::Running {
                rec.progress = progress.clamp(0.0, 1.0);
            }
        }
    }
}

pub(crate) fn spawn(state: AppState, id: String) {
    tokio::spawn(run(state, id));
}

async fn run(state: AppState, id: String) {
    let Some(rec) = state.inner.jobs.get(&id) else {
        return;
    };
    let lock = state.job_lock(&rec.dataset_id, rec.kind);
    let _running = lock.lock().await;
    let book = &state.inner.jobs;
    if let Err(e) = book.transition(&id, |r| {
        r.state = JobState::Running;
        r.progress = 0.0;
    }) {
        tracing::error!(job = %id, "cannot start job: {e}");
        return;
    }
    let worker_state = state.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let progress = |p: f64| worker_state.inner.jobs.set_progress(&rec.id, p);
        crate::work::execute(&worker_state, &rec, &progress)
    })
    .await;
    let finish = match outcome {
        Ok(Ok(result_ref)) => book.transition(&id, |r| {
            r.state = JobState::Done;
            r.progress = 1.0;
            r.result_ref = Some(result_ref);
        }),
        Ok(Err(e)) => book.transition(&id, |r| {
            r.state = JobState::Failed;
            r.error = Some(format!("{}: {e}", e.code()));
        }),
        Err(join) => book.transition(&id, |r| {
            r.state = JobState::Failed;
            r.error = Some(format!("internal: worker stopped: {join}"));
        }),
    };
    if let Err(e) = finish {
        tracing::error!(job = %id, "cannot record job outcome: {e}");
    }
}
