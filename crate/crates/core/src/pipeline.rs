//! Batch stages: annotate, evaluate, inspect, validate-config.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::chunk::{compose_chunk, reduce_visual, InformationChunk};
use crate::config::{ConfigError, PipelineConfig};
use crate::dataset::{
    exclude_audioless, load_manifest, read_latest_annotations, AnnotationRecord, AnnotationWriter, DatasetError,
    DatasetManifest, ExclusionReport, ProvenanceEntry, VideoAsset,
};
use crate::gateway::{BackendRef, ExpertGateway, ExpertKind, VisualAnnotation};
use crate::hashing::fan_out_seed;
use crate::llm::LlmClient;
use crate::media::MediaIngest;
use crate::prompt::{render_prompt, PromptError, PromptLibrary, PromptStrategy};
use crate::retrieval::io::read_matrix;
use crate::retrieval::{build_grid, render_report, BenchmarkGrid, CellCoords, RetrievalError, SimilarityMatrix};
use crate::style::{video_style, ColorTable};
use crate::tone::aggregate_tone;

/// Timestamp recorded when every backend is a mock, so reruns are byte-identical.
pub const DETERMINISTIC_TIMESTAMP: &str = "1970-01-01T00:00:00Z";

pub const STYLE_BACKEND: &str = "builtin:kmeans+css3";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("config has no manifest path")]
    NoManifest,
    #[error("--only names video ids not in the manifest: {0}")]
    UnknownOnly(String),
    #[error("every one of {0} videos failed; see the log for per-video errors")]
    TotalFailure(usize),
    #[error("config lists no evaluation models")]
    NoModels,
    #[error("{model}: matrix file {path} does not exist")]
    MissingMatrix { model: String, path: PathBuf },
    #[error("no record for video_id {0:?} in the store")]
    NotFound(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default)]
pub struct AnnotateOptions {
    pub force: bool,
    pub only: Option<Vec<String>>,
    pub strategy: Option<PromptStrategy>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AnnotateSummary {
    pub manifest_videos: usize,
    pub excluded: ExclusionReport,
    pub skipped_existing: usize,
    pub written: usize,
    pub validation_failures: usize,
    /// (video_id, error) per failed video, in manifest order.
    pub failures: Vec<(String, String)>,
}

impl AnnotateSummary {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }
}

impl std::fmt::Display for AnnotateSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} videos in manifest, {} excluded without audio, {} already annotated, {} written ({} failed validation), {} failed",
            self.manifest_videos,
            self.excluded.total(),
            self.skipped_existing,
            self.written,
            self.validation_failures,
            self.failures.len()
        )
    }
}

/// Shared per-run state handed to every worker.
struct Annotator<'a> {
    config: &'a PipelineConfig,
    strategy: PromptStrategy,
    ingest: MediaIngest,
    gateway: ExpertGateway,
    llm: LlmClient,
    library: PromptLibrary,
    colors: &'static ColorTable,
    deterministic: bool,
}

impl Annotator<'_> {
    fn timestamp(&self) -> String {
        if self.deterministic {
            DETERMINISTIC_TIMESTAMP.to_owned()
        } else {
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        }
    }

    fn provenance(&self, backend: String) -> ProvenanceEntry {
        ProvenanceEntry {
            backend,
            timestamp: self.timestamp(),
        }
    }

    fn chunk(&self, asset: &VideoAsset) -> Result<InformationChunk, String> {
        let rates = &self.config.sampling;
        let err = |stage: &str, e: &dyn std::fmt::Display| format!("{stage}: {e}");

        let frames = self.ingest.sample_frames(asset, rates.visual_fps).map_err(|e| err("visual ingest", &e))?;
        let captions = frames
            .iter()
            .map(|f| self.gateway.caption_frame(f))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err("caption", &e))?;
        let raw = VisualAnnotation::from_captions(captions).map_err(|e| err("caption", &e))?;
        let visual = reduce_visual(raw.entries(), self.config.visual_max_entries)
            .map_err(|_| "visual_max_entries must be at least 1".to_owned())?;

        let audio = self.ingest.extract_audio(asset).map_err(|e| err("audio ingest", &e))?;
        let dialogue = self.gateway.transcribe(audio.as_ref()).map_err(|e| err("transcribe", &e))?;

        let tone_frames = self.ingest.sample_frames(asset, rates.tone_fps).map_err(|e| err("tone ingest", &e))?;
        let labels = tone_frames
            .iter()
            .map(|f| self.gateway.detect_emotion(f))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err("emotion", &e))?;
        let tone = aggregate_tone(&labels);

        let style_frames = self.ingest.sample_frames(asset, rates.style_fps).map_err(|e| err("style ingest", &e))?;
        let seed = fan_out_seed(self.config.seed, asset.video_id.as_bytes());
        let style = video_style(&style_frames, seed, &self.config.kmeans.params(seed), self.colors)
            .map_err(|e| err("style", &e))?;

        Ok(compose_chunk(visual, dialogue, tone, style))
    }

    fn annotate(&self, asset: &VideoAsset) -> Result<AnnotationRecord, String> {
        let chunk = self.chunk(asset)?;
        let prompt = render_prompt(&self.library, self.strategy, &chunk);
        let caption = self
            .llm
            .compose_caption(&asset.video_id, &prompt, &chunk.facets())
            .map_err(|e| format!("llm: {e}"))?;
        if !caption.validation.passed {
            log::warn!(
                "{}: caption names unlicensed terms (colors {:?}, emotions {:?})",
                asset.video_id,
                caption.validation.flagged_colors,
                caption.validation.flagged_emotions
            );
        }
        let mut record = AnnotationRecord::new(&asset.video_id, self.strategy, chunk);
        record.holistic_caption = Some(caption);
        for kind in [ExpertKind::Caption, ExpertKind::Transcribe, ExpertKind::Emotion] {
            let backend = self.gateway.backend_ref(kind).identifier();
            record.provenance.insert(kind.to_string(), self.provenance(backend));
        }
        record
            .provenance
            .insert("style".into(), self.provenance(STYLE_BACKEND.to_owned()));
        let llm = match &self.config.llm.endpoint {
            BackendRef::Mock => format!("mock:{}", self.llm.model_id()),
            BackendRef::Http(url) => format!("{url}#{}", self.llm.model_id()),
        };
        record.provenance.insert("llm".into(), self.provenance(llm));
        Ok(record)
    }
}

fn prompt_library(config: &PipelineConfig) -> Result<PromptLibrary, PromptError> {
    match &config.prompts_dir {
        Some(dir) => PromptLibrary::from_dir(dir),
        None => Ok(PromptLibrary::bundled()),
    }
}

fn load_included(config: &PipelineConfig) -> Result<(DatasetManifest, DatasetManifest, ExclusionReport), PipelineError> {
    let path = config.manifest.as_ref().ok_or(PipelineError::NoManifest)?;
    let manifest = load_manifest(path)?;
    let (included, report) = if config.exclude_audioless {
        exclude_audioless(&manifest)
    } else {
        (manifest.clone(), ExclusionReport::default())
    };
    Ok((manifest, included, report))
}

/// Annotate every included video not yet in the store, or all of them with
/// `force`. Per-video failures are logged and reported in the summary; the
/// run itself fails only on setup errors or when every video fails.
pub fn cmd_annotate(config: &PipelineConfig, options: &AnnotateOptions) -> Result<AnnotateSummary, PipelineError> {
    config.validate()?;
    let strategy = options.strategy.unwrap_or(config.strategy);
    let (manifest, included, excluded) = load_included(config)?;

    if let Some(report_path) = &config.output.exclusion_report {
        let json = serde_json::to_string_pretty(&excluded).expect("exclusion report serializes");
        fs::write(report_path, json + "\n").map_err(|source| PipelineError::Io {
            path: report_path.clone(),
            source,
        })?;
    }

    let mut assets: Vec<&VideoAsset> = included.assets.iter().collect();
    if let Some(only) = &options.only {
        let unknown: Vec<&str> = only
            .iter()
            .map(String::as_str)
            .filter(|id| !manifest.contains(id))
            .collect();
        if !unknown.is_empty() {
            return Err(PipelineError::UnknownOnly(unknown.join(",")));
        }
        let wanted: HashSet<&str> = only.iter().map(String::as_str).collect();
        assets.retain(|a| wanted.contains(a.video_id.as_str()));
    }

    let mut summary = AnnotateSummary {
        manifest_videos: manifest.assets.len(),
        excluded,
        ..AnnotateSummary::default()
    };
    if !options.force {
        let done: HashSet<String> = read_latest_annotations(&config.output.store)?
            .into_iter()
            .filter(|r| r.strategy == strategy)
            .map(|r| r.video_id)
            .collect();
        let before = assets.len();
        assets.retain(|a| !done.contains(&a.video_id));
        summary.skipped_existing = before - assets.len();
    }
    if assets.is_empty() {
        log::info!("nothing to annotate");
        return Ok(summary);
    }

    let annotator = Annotator {
        config,
        strategy,
        ingest: MediaIngest::new(config.media.clone()),
        gateway: ExpertGateway::new(&config.experts),
        llm: LlmClient::new(config.llm.clone()),
        library: prompt_library(config)?,
        colors: ColorTable::css3(),
        deterministic: config.all_mock(),
    };
    let mut writer = AnnotationWriter::open(&config.output.store)?;
    let started = Instant::now();
    let next = AtomicUsize::new(0);
    let total = assets.len();
    let workers = config.workers.min(total);

    let write_result: Result<(), DatasetError> = std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, assets, annotator) = (&next, &assets, &annotator);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(asset) = assets.get(i) else { break };
                if tx.send((i, annotator.annotate(asset))).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // Single writer. Results are committed in manifest order so the
        // store does not depend on worker scheduling.
        let mut pending = BTreeMap::new();
        let mut cursor = 0;
        for (i, result) in rx {
            pending.insert(i, result);
            while let Some(result) = pending.remove(&cursor) {
                let video_id = &assets[cursor].video_id;
                match result {
                    Ok(record) => {
                        writer.append(&record)?;
                        summary.written += 1;
                        if record.holistic_caption.as_ref().is_some_and(|c| !c.validation.passed) {
                            summary.validation_failures += 1;
                        }
                    }
                    Err(e) => {
                        log::error!("{video_id}: {e}");
                        summary.failures.push((video_id.clone(), e));
                    }
                }
                cursor += 1;
            }
        }
        Ok(())
    });
    write_result?;
    log::info!("annotated {} of {} videos in {:.2?}", summary.written, total, started.elapsed());

    if summary.written == 0 && !summary.failures.is_empty() {
        return Err(PipelineError::TotalFailure(summary.failures.len()));
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOutcome {
    pub grids: Vec<BenchmarkGrid>,
    pub report: String,
}

pub fn cmd_evaluate(config: &PipelineConfig) -> Result<EvaluateOutcome, PipelineError> {
    config.validate()?;
    let eval = &config.evaluation;
    if eval.models.is_empty() {
        return Err(PipelineError::NoModels);
    }
    let mut grids = Vec::with_capacity(eval.models.len());
    for model in &eval.models {
        let mut cells = Vec::with_capacity(model.matrices.len());
        for file in &model.matrices {
            if !file.path.exists() {
                return Err(PipelineError::MissingMatrix {
                    model: model.name.clone(),
                    path: file.path.clone(),
                });
            }
            let m: SimilarityMatrix<f64> = read_matrix(&file.path)?;
            cells.push((CellCoords::new(file.training_pairs, file.query_pairs), m));
        }
        grids.push(build_grid(&model.name, &cells)?);
    }
    let report = render_report(&grids, eval.format);
    if let Some(path) = &eval.report {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        fs::write(path, &report).map_err(|source| PipelineError::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok(EvaluateOutcome { grids, report })
}

fn dump_record(out: &mut String, record: &AnnotationRecord, library: &PromptLibrary) {
    let _ = writeln!(out, "video_id: {}", record.video_id);
    let _ = writeln!(out, "strategy: {}", record.strategy);
    let _ = writeln!(out, "chunk grammar: {}", record.chunk_grammar);
    out.push_str("\n== chunk ==\n");
    out.push_str(&record.chunk.rendered);
    out.push_str("\n\n== prompt ==\n");
    out.push_str(&render_prompt(library, record.strategy, &record.chunk).text);
    out.push('\n');
    match &record.holistic_caption {
        Some(c) => {
            let _ = writeln!(out, "\n== caption ({}, prompt {}) ==", c.model_id, c.prompt_hash);
            out.push_str(&c.text);
            out.push('\n');
            let v = &c.validation;
            let _ = writeln!(out, "\n== validation: {} ==", if v.passed { "passed" } else { "FAILED" });
            if !v.passed {
                let _ = writeln!(out, "flagged colors: {}", v.flagged_colors.join(", "));
                let _ = writeln!(out, "flagged emotions: {}", v.flagged_emotions.join(", "));
            }
        }
        None => out.push_str("\n== caption ==\n(none)\n"),
    }
    out.push_str("\n== provenance ==\n");
    for (facet, p) in &record.provenance {
        let _ = writeln!(out, "{facet}: {} at {}", p.backend, p.timestamp);
    }
}

/// Human-readable dump of the latest record(s) for `video_id`, one per strategy.
pub fn cmd_inspect(
    config: &PipelineConfig,
    video_id: &str,
    strategy: Option<PromptStrategy>,
) -> Result<String, PipelineError> {
    let library = prompt_library(config)?;
    let records: Vec<AnnotationRecord> = read_latest_annotations(&config.output.store)?
        .into_iter()
        .filter(|r| r.video_id == video_id && strategy.is_none_or(|s| s == r.strategy))
        .collect();
    if records.is_empty() {
        return Err(PipelineError::NotFound(video_id.to_owned()));
    }
    let mut out = String::new();
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            out.push_str("\n----\n\n");
        }
        dump_record(&mut out, r, &library);
    }
    Ok(out)
}

/// Check the config and everything it points at without running a stage.
pub fn cmd_validate_config(config: &PipelineConfig) -> Result<String, PipelineError> {
    config.validate()?;
    prompt_library(config)?;
    let mut out = String::from("config ok\n");
    if config.manifest.is_some() {
        let (manifest, included, report) = load_included(config)?;
        let _ = writeln!(
            out,
            "manifest: {} videos, {} included, {} excluded without audio",
            manifest.assets.len(),
            included.assets.len(),
            report.total()
        );
    }
    let backends = [
        ("caption", &config.experts.caption),
        ("transcribe", &config.experts.transcribe),
        ("emotion", &config.experts.emotion),
        ("llm", &config.llm.endpoint),
    ];
    for (name, b) in backends {
        let _ = writeln!(out, "{name}: {}", b.identifier());
    }
    for m in &config.evaluation.models {
        let missing = m.matrices.iter().filter(|f| !f.path.exists()).count();
        let _ = writeln!(out, "evaluation model {}: {} matrices ({missing} missing)", m.name, m.matrices.len());
    }
    Ok(out)
}
