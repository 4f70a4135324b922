use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use reviewlens_client::Client;
use reviewlens_core::api::{PredictResponse, Prediction};
use reviewlens_core::backbone::{BackboneConfig, BackboneKind};
use reviewlens_core::clustering::{export_cluster_gallery, kmeans_fit, ClusterConfig};
use reviewlens_core::config::AppConfig;
use reviewlens_core::detection::{
    classify_documents, detect_document, detections_to_json, document_scores, parse_detections, parse_voc,
    render_scores, rows_from_csv, rows_to_csv, split_rows, voc_to_rows, DetectorConfig, DetectorKind, Split,
};
use reviewlens_core::evaluation::render_report;
use reviewlens_core::head::{load_head, predict, save_head, train_head, TrainConfig, TrainedHead};
use reviewlens_core::pipeline::{evaluate, extract_manifest, labeled_subset, parse_cutoffs, rows_for};
use reviewlens_core::store::{
    apply_label, feature_store_read, feature_store_write, load_manifest, rasterize_document, save_manifest,
    ImageManifest, ImageRecord, LabelJournal, RasterizeConfig,
};
use reviewlens_core::{Error, Result};

use crate::*;

type Outcome = std::result::Result<(), Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Writes to `path`, or stdout when absent.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| io_err(Path::new("<runtime>"), e))
}

pub fn dispatch(cli: Cli) -> Outcome {
    let config = AppConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Rasterize(a) => rasterize(&config, a),
        Command::Extract(a) => extract(&config, a),
        Command::Cluster(a) => cluster(&config, a),
        Command::Train(a) => train(&config, a),
        Command::Predict(a) => predict_cmd(a),
        Command::VocConvert(a) => voc_convert(a),
        Command::Split(a) => split(a),
        Command::ImportDetections(a) => import(a),
        Command::Score(a) => score(&config, a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Serve(a) => serve(config, a),
    }
}

fn open_or_new(path: &Path, name: Option<&str>) -> Result<ImageManifest> {
    if path.exists() {
        return load_manifest(path);
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    ImageManifest::new(name.map_or(stem, str::to_string), Vec::new())
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "jpg" | "jpeg" | "bmp")
    )
}

/// Image files under `dir`, recursively, with ids relative to `dir`.
fn scan_images(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| io_err(&d, e))? {
            let path = entry.map_err(|e| io_err(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if is_image(&path) {
                let rel = path.strip_prefix(dir).expect("under dir");
                let id = rel.with_extension("").to_string_lossy().replace('\\', "/");
                let abs = std::path::absolute(&path).map_err(|e| io_err(&path, e))?;
                out.push((id, abs));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn ingest(a: IngestArgs) -> Outcome {
    let mut manifest = open_or_new(&a.manifest, a.name.as_deref())?;
    let mut added = 0;
    for dir in &a.images {
        let records: Vec<ImageRecord> = scan_images(dir)?
            .into_iter()
            .map(|(id, path)| ImageRecord::new(id, path).labeled(a.label))
            .collect();
        added += records.len();
        manifest = manifest.append(records)?;
    }
    if !a.set_label.is_empty() {
        let journal_path = a.journal.clone().unwrap_or_else(|| a.manifest.with_extension("labels.jsonl"));
        let journal = LabelJournal::open(journal_path);
        for (id, label) in &a.set_label {
            manifest = apply_label(&manifest, id, *label, &journal)?;
        }
    }
    save_manifest(&manifest, &a.manifest)?;
    println!(
        "{}: {} images ({} added, {} labels set)",
        a.manifest.display(),
        manifest.len(),
        added,
        a.set_label.len()
    );
    Ok(())
}

fn rasterize(config: &AppConfig, a: RasterizeArgs) -> Outcome {
    let cfg = RasterizeConfig {
        dpi: a.dpi.unwrap_or(config.rasterize.dpi),
        output_dir: a.out_dir,
        command: a.command.or_else(|| config.rasterize.command.clone()),
    };
    let doc = rasterize_document(&a.doc, &cfg)?;
    let manifest = open_or_new(&a.manifest, None)?.append(doc.records.clone())?;
    save_manifest(&manifest, &a.manifest)?;
    if doc.is_flagged() {
        eprintln!("warning: document `{}` is missing pages {:?}", doc.doc_id, doc.missing_pages);
    }
    println!("{}: {} pages", doc.doc_id, doc.records.len());
    Ok(())
}

fn backbone_config(config: &AppConfig, f: &BackboneFlags) -> Result<BackboneConfig> {
    let mut cfg = config.backbone.clone();
    if let Some(kind) = &f.backbone {
        cfg.kind = kind.parse::<BackboneKind>()?;
        if cfg.kind == BackboneKind::Mock {
            cfg.model_path = None;
        }
    }
    if let Some(p) = &f.model_path {
        cfg.model_path = Some(p.clone());
    }
    if let Some(b) = f.batch_size {
        cfg.batch_size = b;
    }
    if let Some(s) = f.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn extract(config: &AppConfig, a: ExtractArgs) -> Outcome {
    let manifest = load_manifest(&a.manifest)?;
    let cfg = backbone_config(config, &a.backbone)?;
    let (ids, features) = extract_manifest(&manifest, &cfg, a.mode, &|_| {})?;
    let bytes = feature_store_write(&a.out, &ids, &features)?;
    println!("{}: {} × {} ({bytes} bytes)", a.out.display(), ids.len(), a.mode.dim());
    Ok(())
}

fn cluster(config: &AppConfig, a: ClusterArgs) -> Outcome {
    let (ids, points) = feature_store_read(&a.features)?;
    let manifest = load_manifest(&a.manifest)?;
    let mut cfg = ClusterConfig {
        k: a.k as usize,
        ..config.cluster.clone()
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.restarts {
        cfg.restarts = r;
    }
    if let Some(m) = a.max_iterations {
        cfg.max_iterations = m;
    }
    if let Some(t) = a.tolerance {
        cfg.tolerance = t;
    }
    let model = kmeans_fit(&points, &cfg)?;
    let gallery = export_cluster_gallery(&model, &ids, &points, &manifest)?;
    write(&a.out, &serde_json::to_vec_pretty(&gallery).map_err(Error::from)?)?;
    let sizes: Vec<usize> = gallery.clusters.iter().map(|c| c.size).collect();
    println!("k = {}, inertia = {:.6}, sizes {:?}", gallery.k, gallery.inertia, sizes);
    Ok(())
}

fn train(config: &AppConfig, a: TrainArgs) -> Outcome {
    let mut cfg: TrainConfig = config.train.clone();
    macro_rules! set {
        ($($field:ident),*) => {$( if let Some(v) = a.$field { cfg.$field = v; } )*};
    }
    set!(epochs, learning_rate, batch_size, optimizer, validation_fraction, hidden_units, seed);
    let manifest = load_manifest(&a.manifest)?;
    let (ids, features) = feature_store_read(&a.features)?;
    let set = labeled_subset(&manifest, &ids, &features)?;
    let (params, history) = train_head(&set.features, &set.labels, &cfg)?;
    if let Some(last) = history.last() {
        println!(
            "epoch {}: train loss {:.6}, validation accuracy {}",
            last.epoch,
            last.train_loss,
            last.validation_accuracy.map_or("n/a".to_string(), |v| format!("{v:.4}"))
        );
    }
    save_head(
        &a.out,
        &TrainedHead {
            config: cfg,
            metrics: history,
            params,
        },
    )?;
    Ok(())
}

fn predict_cmd(a: PredictArgs) -> Outcome {
    let head = load_head(&a.model)?;
    let (ids, features) = feature_store_read(&a.features)?;
    let wanted = if a.ids.is_empty() { ids.clone() } else { a.ids.clone() };
    let rows = rows_for(&ids, &features, &wanted)?;
    let (decisions, probs) = predict(&head.params, &rows, a.cutoff)?;
    let predictions = wanted
        .into_iter()
        .zip(probs)
        .zip(decisions)
        .map(|((image_id, probability), label)| Prediction {
            image_id,
            probability,
            label,
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&PredictResponse { predictions }).map_err(Error::from)?;
    text.push('\n');
    emit(a.out.as_deref(), &text)?;
    Ok(())
}

fn voc_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(input)
                .map_err(|e| io_err(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("xml"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(input.clone());
        }
    }
    Ok(out)
}

fn voc_convert(a: VocConvertArgs) -> Outcome {
    let mut annotations = Vec::new();
    for file in voc_files(&a.inputs)? {
        let ann = parse_voc(&read(&file)?).map_err(|e| match e {
            Error::Xml { line, column, message } => Error::Xml {
                line,
                column,
                message: format!("{}: {message}", file.display()),
            },
            Error::Schema(field) => Error::Schema(format!("{field} in {}", file.display())),
            other => other,
        })?;
        annotations.push(ann);
    }
    let rows = voc_to_rows(&annotations);
    write(&a.out, rows_to_csv(&rows)?.as_bytes())?;
    println!("{}: {} rows from {} files", a.out.display(), rows.len(), annotations.len());
    Ok(())
}

fn split(a: SplitArgs) -> Outcome {
    let text = String::from_utf8_lossy(&read(&a.csv)?).into_owned();
    let rows = rows_from_csv(&text)?;
    let s = split_rows(&rows, a.test_fraction, a.seed)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| io_err(&a.out_dir, e))?;
    write(&a.out_dir.join("train.csv"), rows_to_csv(&s.train)?.as_bytes())?;
    write(&a.out_dir.join("test.csv"), rows_to_csv(&s.test)?.as_bytes())?;
    write(&a.out_dir.join("train.txt"), Split::manifest_text(&s.train).as_bytes())?;
    write(&a.out_dir.join("test.txt"), Split::manifest_text(&s.test).as_bytes())?;
    println!(
        "train: {} images / {} rows, test: {} images / {} rows",
        Split::filenames(&s.train).len(),
        s.train.len(),
        Split::filenames(&s.test).len(),
        s.test.len()
    );
    Ok(())
}

fn import(a: ImportArgs) -> Outcome {
    let bytes = read(&a.input)?;
    if let Some(server) = &a.server {
        let client = Client::new(server)?;
        let summary = runtime()?.block_on(client.import_detections(bytes))?;
        println!("imported {} documents", summary.documents);
        return Ok(());
    }
    let docs = parse_detections(&bytes)?;
    if let Some(out) = &a.out {
        write(out, detections_to_json(&docs)?.as_bytes())?;
    }
    println!("{} documents valid", docs.len());
    Ok(())
}

fn detector_config(config: &AppConfig, a: &ScoreArgs) -> Result<DetectorConfig> {
    let mut cfg = config.detector.clone();
    cfg.kind = match a.detector.as_str() {
        "mock" => DetectorKind::Mock,
        "pretrained" | "onnx" => DetectorKind::Pretrained,
        other => return Err(Error::Config(format!("unknown detector `{other}`"))),
    };
    cfg.model_path = match cfg.kind {
        DetectorKind::Mock => None,
        DetectorKind::Pretrained => a.model_path.clone().or(cfg.model_path),
    };
    cfg.seed = a.seed;
    Ok(cfg)
}

fn score(config: &AppConfig, a: ScoreArgs) -> Outcome {
    let scores: BTreeMap<String, f64> = if let Some(server) = &a.server {
        let client = Client::new(server)?;
        runtime()?.block_on(client.scores())?
    } else if let Some(path) = &a.detections {
        document_scores(&parse_detections(&read(path)?)?)
    } else if let Some(path) = &a.manifest {
        let manifest = load_manifest(path)?;
        let detector = detector_config(config, &a)?.build()?;
        let mut by_doc: BTreeMap<String, Vec<ImageRecord>> = BTreeMap::new();
        for r in manifest.images.iter().filter(|r| r.doc_id.is_some()) {
            by_doc.entry(r.doc_id.clone().unwrap()).or_default().push(r.clone());
        }
        let mut docs = Vec::with_capacity(by_doc.len());
        for pages in by_doc.values() {
            let run = detect_document(pages, detector.as_ref())?;
            for f in &run.failures {
                eprintln!(
                    "warning: document `{}` page {} excluded: {}",
                    run.detections.doc_id, f.page_index, f.message
                );
            }
            docs.push(run.detections);
        }
        if let Some(out) = &a.detections_out {
            write(out, detections_to_json(&docs)?.as_bytes())?;
        }
        document_scores(&docs)
    } else {
        return Err(Error::Config("give one of --detections, --manifest or --server".into()).into());
    };
    if let (Some(cutoff), Some(out)) = (a.cutoff, &a.decisions_out) {
        let decisions = classify_documents(&scores, cutoff)?;
        let mut text = serde_json::to_string_pretty(&decisions).map_err(Error::from)?;
        text.push('\n');
        write(out, text.as_bytes())?;
    }
    emit(a.out.as_deref(), &render_scores(&scores)?)?;
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Outcome {
    let cutoffs = parse_cutoffs(&a.cutoffs)?;
    let text = if let Some(server) = &a.server {
        let client = Client::new(server)?;
        runtime()?.block_on(client.evaluation_report(&cutoffs, a.dataset.as_deref(), a.format))?
    } else {
        let scores_path = a.scores.as_deref().expect("required without --server");
        let scores: BTreeMap<String, f64> = serde_json::from_slice(&read(scores_path)?).map_err(Error::from)?;
        let manifest = load_manifest(a.truth.as_deref().expect("required without --server"))?;
        let report = evaluate(&manifest.name, &scores, &manifest.truth(), &cutoffs)?;
        render_report(&report, a.format)?
    };
    emit(a.out.as_deref(), &text)?;
    Ok(())
}

fn serve(mut config: AppConfig, a: ServeArgs) -> Outcome {
    if let Some(p) = a.port {
        config.service.port = p;
    }
    if let Some(b) = a.bind {
        config.service.bind = b;
    }
    if let Some(d) = a.data_dir {
        config.service.data_dir = d;
    }
    let _ = tracing_subscriber::fmt()
        .with_max_level(tracing_subscriber::filter::LevelFilter::INFO)
        .with_writer(std::io::stderr)
        .try_init();
    let addr = format!("{}:{}", config.service.bind, config.service.port);
    let state = reviewlens_service::AppState::open(config)?;
    let rt = runtime()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| io_err(Path::new(&addr), e))?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(|e| io_err(Path::new(&addr), e))?);
        reviewlens_service::serve(listener, state)
            .await
            .map_err(|e| io_err(Path::new(&addr), e))
    })?;
    Ok(())
}
