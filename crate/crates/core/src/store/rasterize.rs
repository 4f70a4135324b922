use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use super::manifest::ImageRecord;
use crate::error::{Error, Result};

pub const RASTERIZER_ENV: &str = "REVIEWLENS_RASTERIZER";
pub const DEFAULT_DPI: u32 = 150;

#[derive(Debug, Clone)]
pub struct RasterizeConfig {
    pub dpi: u32,
    pub output_dir: PathBuf,
    /// Command template with `{input}`, `{outdir}` and `{dpi}` placeholders.
    /// Falls back to `$REVIEWLENS_RASTERIZER` when unset.
    pub command: Option<String>,
}

impl RasterizeConfig {
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            dpi: DEFAULT_DPI,
            output_dir: output_dir.into(),
            command: None,
        }
    }

    fn template(&self) -> Result<String> {
        match &self.command {
            Some(c) => Ok(c.clone()),
            None => std::env::var(RASTERIZER_ENV).map_err(|_| {
                Error::Tool(format!("no rasterizer configured (set {RASTERIZER_ENV})"))
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterizedDocument {
    pub doc_id: String,
    pub records: Vec<ImageRecord>,
    /// Page indices inside the produced range with no image; the document
    /// should be flagged and these pages excluded from scoring.
    pub missing_pages: Vec<u32>,
}

impl RasterizedDocument {
    pub fn is_flagged(&self) -> bool {
        !self.missing_pages.is_empty()
    }
}

/// Document id used for a source file: its file stem.
pub fn doc_id_for(doc_path: &Path) -> String {
    doc_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| doc_path.to_string_lossy().into_owned())
}

/// Renders a document to one image per page via the configured external tool.
///
/// The template is split on whitespace and run without a shell; each token
/// has its placeholders substituted. The tool must write `page-<index>.png`
/// into `{outdir}`, which is `<output_dir>/<doc_id>`.
pub fn rasterize_document(doc_path: &Path, config: &RasterizeConfig) -> Result<RasterizedDocument> {
    if !doc_path.exists() {
        return Err(Error::NotFound(format!("document {}", doc_path.display())));
    }
    let doc_id = doc_id_for(doc_path);
    let outdir = config.output_dir.join(&doc_id);
    std::fs::create_dir_all(&outdir).map_err(|e| Error::io(&outdir, e))?;

    let template = config.template()?;
    let dpi = config.dpi.to_string();
    let input = doc_path.to_string_lossy();
    let out = outdir.to_string_lossy();
    let argv: Vec<String> = template
        .split_whitespace()
        .map(|tok| {
            tok.replace("{input}", &input)
                .replace("{outdir}", &out)
                .replace("{dpi}", &dpi)
        })
        .collect();
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| Error::Tool("empty rasterizer command".into()))?;
    let output = Command::new(program)
        .args(args)
        .output()
        .map_err(|e| Error::Tool(format!("cannot run `{program}`: {e}")))?;
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        return Err(Error::Tool(format!(
            "`{program}` exited with {}: {}",
            output.status,
            stderr.trim()
        )));
    }

    let pages = collect_pages(&outdir)?;
    if pages.is_empty() {
        return Err(Error::EmptyDocument(doc_id));
    }
    // tools such as pdftoppm number pages from 1
    let base = u32::from(*pages.keys().next().unwrap() == 1);
    let last = *pages.keys().next_back().unwrap() - base;
    let mut records = Vec::with_capacity(pages.len());
    let mut missing_pages = Vec::new();
    for index in 0..=last {
        match pages.get(&(index + base)) {
            Some(path) => records.push(
                ImageRecord::new(format!("{doc_id}/page-{index}"), path.clone()).page(&doc_id, index),
            ),
            None => missing_pages.push(index),
        }
    }
    Ok(RasterizedDocument {
        doc_id,
        records,
        missing_pages,
    })
}

fn collect_pages(dir: &Path) -> Result<BTreeMap<u32, PathBuf>> {
    let mut pages = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(index) = name
            .to_str()
            .and_then(|n| n.strip_prefix("page-"))
            .and_then(|n| n.strip_suffix(".png"))
            .and_then(|n| n.parse::<u32>().ok())
        else {
            continue;
        };
        pages.insert(index, entry.path());
    }
    Ok(pages)
}
