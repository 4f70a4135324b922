use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{MetricsRow, PrPoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(Error::Config(format!("unknown report format `{other}` (json or csv)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub n: usize,
    pub positives: usize,
    pub table: Vec<MetricsRow>,
    pub pr_curve: Vec<PrPoint>,
}

/// JSON carries the whole report; CSV carries the threshold table only.
pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut s = String::from("cutoff,precision,recall,f1,accuracy\n");
            for r in &report.table {
                writeln!(
                    s,
                    "{:.6},{:.6},{:.6},{:.6},{:.6}",
                    r.cutoff, r.precision, r.recall, r.f1, r.accuracy
                )
                .expect("writing to a String");
            }
            Ok(s)
        }
    }
}

pub fn emit_report(report: &EvaluationReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = render_report(report, format)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
