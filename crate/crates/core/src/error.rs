use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest{}: {message}", index.map(|i| format!(" at record {i}")).unwrap_or_default())]
    MalformedManifest { index: Option<usize>, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt feature store at record {record}: {message}")]
    Corruption { record: u64, message: String },
    #[error("external tool failed: {0}")]
    Tool(String),
    #[error("document produced no pages: {0}")]
    EmptyDocument(String),
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("xml parse error at {line}:{column}: {message}")]
    Xml { line: u32, column: u32, message: String },
    #[error("schema error: missing or invalid field `{0}`")]
    Schema(String),
    #[error("inconsistent inputs: {0}")]
    Inconsistency(String),
    #[error("missing ground-truth label for `{0}`")]
    MissingLabel(String),
    #[error("recall is undefined: no positive items in ground truth")]
    UndefinedRecall,
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable code, used by the HTTP layer and CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MalformedManifest { .. } => "malformed_manifest",
            Error::Validation(_) => "validation",
            Error::NotFound(_) => "not_found",
            Error::Dimension(_) => "dimension",
            Error::Format(_) => "format",
            Error::Corruption { .. } => "corruption",
            Error::Tool(_) => "tool",
            Error::EmptyDocument(_) => "empty_document",
            Error::Decode(_) => "decode",
            Error::InvalidImage(_) => "invalid_image",
            Error::Model(_) => "model",
            Error::EmptyBatch => "empty_batch",
            Error::DegenerateData(_) => "degenerate_data",
            Error::Config(_) => "config",
            Error::Xml { .. } => "xml_parse",
            Error::Schema(_) => "schema",
            Error::Inconsistency(_) => "inconsistency",
            Error::MissingLabel(_) => "missing_label",
            Error::UndefinedRecall => "undefined_recall",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
