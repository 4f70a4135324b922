//! Image analytics for document review: deep features from a pluggable
//! backbone, a trainable binary head, k-means clustering, handwriting
//! detection scoring, and threshold evaluation.

pub mod api;
pub mod backbone;
pub mod clustering;
pub mod config;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod head;
pub mod pipeline;
pub mod store;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};
pub use features::{FeatureMatrix, FeatureMode, FeatureVector};

/// Binary decision shared by the head and the document scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Positive,
    Negative,
}

impl Decision {
    /// Positive iff `score >= cutoff`.
    pub fn at_cutoff(score: f64, cutoff: f64) -> Self {
        if score >= cutoff {
            Decision::Positive
        } else {
            Decision::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == Decision::Positive
    }
}
