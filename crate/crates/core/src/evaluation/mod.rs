//! Threshold metrics, PR curves, and report files.

mod report;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use report::{emit_report, render_report, EvaluationReport, ReportFormat};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub cutoff: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub cutoff: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Points in increasing cutoff order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

fn check_cutoff(cutoff: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&cutoff) {
        return Err(Error::Config(format!("cutoff {cutoff} outside [0, 1]")));
    }
    Ok(())
}

/// Pairs every score with its truth, failing on the first unlabeled id.
fn labeled(scores: &BTreeMap<String, f64>, truth: &HashMap<String, bool>) -> Result<Vec<(f64, bool)>> {
    scores
        .iter()
        .map(|(id, &s)| {
            if !s.is_finite() {
                return Err(Error::Validation(format!("score for `{id}` is not finite")));
            }
            truth
                .get(id)
                .map(|&t| (s, t))
                .ok_or_else(|| Error::MissingLabel(id.clone()))
        })
        .collect()
}

fn tally(items: &[(f64, bool)], cutoff: f64) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::default();
    for &(s, t) in items {
        match (s >= cutoff, t) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    cm
}

/// Prediction is positive iff score ≥ cutoff. Truth may hold extra ids.
pub fn confusion_at(scores: &BTreeMap<String, f64>, truth: &HashMap<String, bool>, cutoff: f64) -> Result<ConfusionMatrix> {
    check_cutoff(cutoff)?;
    Ok(tally(&labeled(scores, truth)?, cutoff))
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Zero denominators give 0 for precision, recall, F1 and accuracy.
pub fn metrics_from(cm: &ConfusionMatrix, cutoff: f64) -> MetricsRow {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    MetricsRow {
        cutoff,
        precision,
        recall,
        f1: f1_score(precision, recall),
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
    }
}

pub fn threshold_table(
    scores: &BTreeMap<String, f64>,
    truth: &HashMap<String, bool>,
    cutoffs: &[f64],
) -> Result<Vec<MetricsRow>> {
    if cutoffs.is_empty() {
        return Err(Error::Config("at least one cutoff is required".into()));
    }
    for &c in cutoffs {
        check_cutoff(c)?;
    }
    let items = labeled(scores, truth)?;
    Ok(cutoffs.iter().map(|&c| metrics_from(&tally(&items, c), c)).collect())
}

/// Samples the curve at every distinct score plus 0 and 1.
///
/// One sort and a single sweep: walking cutoffs upward, items whose score
/// drops below the cutoff move from predicted-positive to predicted-negative.
pub fn pr_curve(scores: &BTreeMap<String, f64>, truth: &HashMap<String, bool>) -> Result<PrCurve> {
    let mut items = labeled(scores, truth)?;
    let positives = items.iter().filter(|i| i.1).count() as u64;
    if positives == 0 {
        return Err(Error::UndefinedRecall);
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut cutoffs: Vec<f64> = items.iter().map(|i| i.0).chain([0.0, 1.0]).collect();
    cutoffs.sort_by(f64::total_cmp);
    cutoffs.dedup();

    let mut cm = ConfusionMatrix {
        tp: positives,
        fp: items.len() as u64 - positives,
        fn_: 0,
        tn: 0,
    };
    let mut next = 0;
    let points = cutoffs
        .into_iter()
        .map(|cutoff| {
            while next < items.len() && items[next].0 < cutoff {
                if items[next].1 {
                    cm.tp -= 1;
                    cm.fn_ += 1;
                } else {
                    cm.fp -= 1;
                    cm.tn += 1;
                }
                next += 1;
            }
            let m = metrics_from(&cm, cutoff);
            PrPoint {
                cutoff,
                precision: m.precision,
                recall: m.recall,
            }
        })
        .collect();
    Ok(PrCurve { points })
}
