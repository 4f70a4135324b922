//! `reviewlens` command line. Exit codes: 0 success, 1 domain error, 2 usage error.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use reviewlens_client::ClientError;
use reviewlens_core::evaluation::ReportFormat;
use reviewlens_core::head::Optimizer;
use reviewlens_core::store::Label;
use reviewlens_core::FeatureMode;

#[derive(Debug, Parser)]
#[command(name = "reviewlens", version, about = "Image analytics for document review")]
pub struct Cli {
    /// Config file (default: ./reviewlens.toml when present).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build or extend an image manifest, or set labels in one.
    Ingest(IngestArgs),
    /// Render a document's pages with the external rasterizer and add them to a manifest.
    Rasterize(RasterizeArgs),
    /// Extract deep features for every manifest image into a feature store.
    Extract(ExtractArgs),
    /// k-means cluster stored features and write the gallery.
    Cluster(ClusterArgs),
    /// Train the classification head on labeled images.
    Train(TrainArgs),
    /// Score images with a trained head.
    Predict(PredictArgs),
    /// Convert PascalVOC annotation files to the annotation CSV.
    VocConvert(VocConvertArgs),
    /// Split an annotation CSV into train and test sets by image.
    Split(SplitArgs),
    /// Validate (and normalize) a detection-import file, or send it to a service.
    ImportDetections(ImportArgs),
    /// Compute document scores from detections.
    Score(ScoreArgs),
    /// Threshold table and PR curve for scored documents.
    Evaluate(EvaluateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Manifest to create or update.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory of images to add (png, jpg, jpeg, bmp); repeatable.
    #[arg(long = "images", value_name = "DIR")]
    pub images: Vec<PathBuf>,
    /// Manifest name when creating.
    #[arg(long)]
    pub name: Option<String>,
    /// Label given to newly added images.
    #[arg(long, value_parser = parse_label, default_value = "unlabeled")]
    pub label: Label,
    /// Set an existing image's label, as ID=LABEL; repeatable.
    #[arg(long = "set-label", value_name = "ID=LABEL", value_parser = parse_assignment)]
    pub set_label: Vec<(String, Label)>,
    /// Label journal (default: <manifest>.labels.jsonl).
    #[arg(long)]
    pub journal: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RasterizeArgs {
    #[arg(long)]
    pub doc: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Manifest the page records are appended to (created if missing).
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub dpi: Option<u32>,
    /// Command template; overrides REVIEWLENS_RASTERIZER.
    #[arg(long)]
    pub command: Option<String>,
}

#[derive(Debug, Args)]
pub struct BackboneFlags {
    /// mock or pretrained.
    #[arg(long)]
    pub backbone: Option<String>,
    #[arg(long)]
    pub model_path: Option<PathBuf>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Seed for the mock backbone.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// conv (8192 features) or fc2 (4096 features).
    #[arg(long, value_parser = parse_mode)]
    pub mode: FeatureMode,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub backbone: BackboneFlags,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Gallery JSON output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Directory for the trained-head bundle.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_parser = parse_optimizer)]
    pub optimizer: Option<Optimizer>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[arg(long)]
    pub hidden_units: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Trained-head bundle directory.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Only these image ids (comma-separated); default all.
    #[arg(long, value_delimiter = ',')]
    pub ids: Vec<String>,
    #[arg(long, default_value_t = 0.5)]
    pub cutoff: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VocConvertArgs {
    /// VOC XML files or directories of them.
    #[arg(long = "input", value_name = "PATH", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Receives train.csv, test.csv, train.txt and test.txt.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Write the validated, box-normalized documents here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Send to a running service instead (e.g. http://127.0.0.1:8710).
    #[arg(long)]
    pub server: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Detection-import JSON.
    #[arg(long, conflicts_with_all = ["manifest", "server"])]
    pub detections: Option<PathBuf>,
    /// Run the detector over the manifest's document pages instead.
    #[arg(long, conflicts_with = "server")]
    pub manifest: Option<PathBuf>,
    /// Detector for --manifest: mock or pretrained.
    #[arg(long, default_value = "mock")]
    pub detector: String,
    #[arg(long)]
    pub model_path: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the detections produced with --manifest.
    #[arg(long)]
    pub detections_out: Option<PathBuf>,
    /// Fetch scores from a running service.
    #[arg(long)]
    pub server: Option<String>,
    /// Classify documents at this cutoff (score >= cutoff is positive).
    #[arg(long, requires = "decisions_out")]
    pub cutoff: Option<f64>,
    /// Where the `{"doc_id": "positive"|"negative"}` decisions go.
    #[arg(long, requires = "cutoff")]
    pub decisions_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// `{"doc_id": score}` JSON.
    #[arg(long, required_unless_present = "server")]
    pub scores: Option<PathBuf>,
    /// Manifest whose labels are the ground truth.
    #[arg(long, required_unless_present = "server")]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value = "0.1,0.5,0.9,0.99")]
    pub cutoffs: String,
    #[arg(long, value_parser = parse_format, default_value = "json")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ask a running service instead of computing locally.
    #[arg(long)]
    pub server: Option<String>,
    /// Service dataset supplying ground truth (with --server).
    #[arg(long, requires = "server")]
    pub dataset: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

fn parse_label(s: &str) -> Result<Label, String> {
    s.parse().map_err(|e: reviewlens_core::Error| e.to_string())
}

fn parse_assignment(s: &str) -> Result<(String, Label), String> {
    let (id, label) = s.rsplit_once('=').ok_or_else(|| format!("expected ID=LABEL, got `{s}`"))?;
    Ok((id.to_string(), parse_label(label)?))
}

fn parse_mode(s: &str) -> Result<FeatureMode, String> {
    s.parse().map_err(|e: reviewlens_core::Error| e.to_string())
}

fn parse_optimizer(s: &str) -> Result<Optimizer, String> {
    match s {
        "sgd" | "sgd_momentum" => Ok(Optimizer::SgdMomentum),
        "adam" => Ok(Optimizer::Adam),
        other => Err(format!("unknown optimizer `{other}` (sgd_momentum or adam)")),
    }
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: reviewlens_core::Error| e.to_string())
}

/// A domain failure, reported as one `error:` line.
#[derive(Debug)]
pub enum Failure {
    Core(reviewlens_core::Error),
    Client(ClientError),
}

impl Failure {
    pub fn code(&self) -> &str {
        match self {
            Failure::Core(e) => e.code(),
            Failure::Client(e) => e.code(),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Client(e) => write!(f, "{e}"),
        }
    }
}

impl From<reviewlens_core::Error> for Failure {
    fn from(e: reviewlens_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Failure::Client(e)
    }
}

/// Parses `argv` and runs it, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(f) => {
            let message = f.to_string().replace('\n', " ");
            eprintln!("error: {}: {message}", f.code());
            1
        }
    }
}
