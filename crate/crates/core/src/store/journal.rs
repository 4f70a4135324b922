use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::manifest::{ImageManifest, Label};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub ts: String,
    pub image_id: String,
    pub label: Label,
}

/// Append-only newline-delimited JSON log of label writes. Replaying the log
/// in file order over the base manifest yields the current labels.
#[derive(Debug)]
pub struct LabelJournal {
    path: PathBuf,
    lock: Mutex<()>,
}

impl LabelJournal {
    pub fn open(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            lock: Mutex::new(()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, image_id: &str, label: Label) -> Result<JournalEntry> {
        let entry = JournalEntry {
            ts: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true),
            image_id: image_id.to_string(),
            label,
        };
        let mut line = serde_json::to_string(&entry)?;
        line.push('\n');
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| Error::io(&self.path, e))?;
        Ok(entry)
    }

    pub fn entries(&self) -> Result<Vec<JournalEntry>> {
        let f = match std::fs::File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&self.path, e)),
        };
        let mut out = Vec::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&self.path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: JournalEntry = serde_json::from_str(&line).map_err(|e| {
                Error::Format(format!("label journal line {}: {e}", n + 1))
            })?;
            out.push(entry);
        }
        Ok(out)
    }

    /// Applies every journal entry, in order, to `base`.
    pub fn replay(&self, base: &ImageManifest) -> Result<ImageManifest> {
        let mut m = base.clone();
        for entry in self.entries()? {
            let idx = m
                .position(&entry.image_id)
                .ok_or_else(|| Error::NotFound(format!("journal references image `{}`", entry.image_id)))?;
            m.images[idx].label = entry.label;
        }
        Ok(m)
    }
}

/// Sets one image's label and records the write in the journal.
pub fn apply_label(
    manifest: &ImageManifest,
    image_id: &str,
    label: Label,
    journal: &LabelJournal,
) -> Result<ImageManifest> {
    let next = manifest.with_label(image_id, label)?;
    journal.append(image_id, label)?;
    Ok(next)
}
