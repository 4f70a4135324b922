//! Corpus catalog, label journal, feature persistence, and page rasterization.

pub mod feature_store;
pub mod journal;
pub mod manifest;
pub mod rasterize;

pub use feature_store::{feature_store_read, feature_store_write, FeatureStoreHeader};
pub use journal::{apply_label, JournalEntry, LabelJournal};
pub use manifest::{load_manifest, save_manifest, ImageManifest, ImageRecord, Label};
pub use rasterize::{rasterize_document, RasterizeConfig, RasterizedDocument};
