//! Dataset manifests, split bookkeeping, and the JSONL annotation store.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunk::{InformationChunk, CHUNK_GRAMMAR};
use crate::llm::HolisticCaption;
use crate::prompt::PromptStrategy;

/// Clip count of the full reference dataset.
pub const REFERENCE_DATASET_SIZE: usize = 10_000;
pub const REFERENCE_TRAIN_VAL: usize = 7010;
pub const REFERENCE_TEST: usize = 1000;
pub const CATEGORY_COUNT: i64 = 20;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: manifest schema violation: {source}")]
    Schema {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate video_id {0:?}")]
    DuplicateId(String),
    #[error("empty video_id")]
    EmptyId,
    #[error("{video_id}: category_id {category_id} outside 0..=19")]
    InvalidCategory { video_id: String, category_id: i64 },
    #[error("{video_id}: duration_s must be a positive number, got {duration_s}")]
    InvalidDuration { video_id: String, duration_s: f64 },
    #[error("full-size manifest must have {REFERENCE_TRAIN_VAL} train_val and {REFERENCE_TEST} test clips, found {train_val} and {test}")]
    ReferenceSplit { train_val: usize, test: usize },
    #[error("annotation record references unknown video_id {0:?}")]
    UnknownVideo(String),
    #[error("{path}:{line}: malformed annotation record: {source}")]
    Record {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Which protocol split a clip belongs to. `holdout` marks clips of the source
/// dataset that sit in neither the training/validation pool nor the sampled
/// test pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    TrainVal,
    Test,
    Holdout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoAsset {
    pub video_id: String,
    pub media_path: PathBuf,
    pub duration_s: f64,
    pub has_audio: bool,
    pub category_id: i64,
    pub split: Split,
    pub original_captions: Vec<String>,
}

fn default_split_name() -> String {
    "1K-A".to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default = "default_split_name")]
    pub split_name: String,
    pub assets: Vec<VideoAsset>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub train_val: usize,
    pub test: usize,
    pub holdout: usize,
}

impl ExclusionReport {
    pub fn total(&self) -> usize {
        self.train_val + self.test + self.holdout
    }
}

impl DatasetManifest {
    pub fn new(split_name: impl Into<String>, assets: Vec<VideoAsset>) -> Result<Self, DatasetError> {
        let manifest = Self {
            split_name: split_name.into(),
            assets,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut seen = HashSet::with_capacity(self.assets.len());
        for a in &self.assets {
            if a.video_id.is_empty() {
                return Err(DatasetError::EmptyId);
            }
            if !seen.insert(a.video_id.as_str()) {
                return Err(DatasetError::DuplicateId(a.video_id.clone()));
            }
            if !(0..CATEGORY_COUNT).contains(&a.category_id) {
                return Err(DatasetError::InvalidCategory {
                    video_id: a.video_id.clone(),
                    category_id: a.category_id,
                });
            }
            if !(a.duration_s.is_finite() && a.duration_s > 0.0) {
                return Err(DatasetError::InvalidDuration {
                    video_id: a.video_id.clone(),
                    duration_s: a.duration_s,
                });
            }
        }
        if self.assets.len() == REFERENCE_DATASET_SIZE {
            let train_val = self.count(Split::TrainVal);
            let test = self.count(Split::Test);
            if train_val != REFERENCE_TRAIN_VAL || test != REFERENCE_TEST {
                return Err(DatasetError::ReferenceSplit { train_val, test });
            }
        }
        Ok(())
    }

    pub fn count(&self, split: Split) -> usize {
        self.assets.iter().filter(|a| a.split == split).count()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &VideoAsset> {
        self.assets.iter().filter(move |a| a.split == split)
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoAsset> {
        self.assets.iter().find(|a| a.video_id == video_id)
    }

    pub fn contains(&self, video_id: &str) -> bool {
        self.get(video_id).is_some()
    }

    /// Resolve relative media paths against `base`.
    pub fn resolve_media_paths(&mut self, base: &Path) {
        for a in &mut self.assets {
            if a.media_path.is_relative() {
                a.media_path = base.join(&a.media_path);
            }
        }
    }
}

/// Load and validate a manifest. Relative `media_path`s are resolved against
/// the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|source| DatasetError::Schema {
            path: path.to_path_buf(),
            source,
        })?;
    manifest.validate()?;
    if let Some(dir) = path.parent() {
        manifest.resolve_media_paths(dir);
    }
    Ok(manifest)
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), DatasetError> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(path, json).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Drop clips without audio; report how many went from each split.
pub fn exclude_audioless(manifest: &DatasetManifest) -> (DatasetManifest, ExclusionReport) {
    let mut report = ExclusionReport::default();
    let mut kept = Vec::with_capacity(manifest.assets.len());
    for a in &manifest.assets {
        if a.has_audio {
            kept.push(a.clone());
        } else {
            match a.split {
                Split::TrainVal => report.train_val += 1,
                Split::Test => report.test += 1,
                Split::Holdout => report.holdout += 1,
            }
        }
    }
    (
        DatasetManifest {
            split_name: manifest.split_name.clone(),
            assets: kept,
        },
        report,
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub backend: String,
    pub timestamp: String,
}

/// One line of the annotation store. Field order is the on-disk order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub strategy: PromptStrategy,
    pub chunk_grammar: String,
    pub chunk: InformationChunk,
    pub holistic_caption: Option<HolisticCaption>,
    pub provenance: BTreeMap<String, ProvenanceEntry>,
}

impl AnnotationRecord {
    pub fn new(video_id: impl Into<String>, strategy: PromptStrategy, chunk: InformationChunk) -> Self {
        Self {
            video_id: video_id.into(),
            strategy,
            chunk_grammar: CHUNK_GRAMMAR.to_owned(),
            chunk,
            holistic_caption: None,
            provenance: BTreeMap::new(),
        }
    }

    pub fn key(&self) -> (&str, PromptStrategy) {
        (&self.video_id, self.strategy)
    }
}

pub fn record_line(record: &AnnotationRecord) -> String {
    serde_json::to_string(record).expect("annotation record serializes")
}

/// Append-only JSONL writer. One writer per store.
pub struct AnnotationWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl AnnotationWriter {
    pub fn open(path: &Path) -> Result<Self, DatasetError> {
        let io_err = |source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    /// Write one record and flush, so a crash loses at most the line in flight.
    pub fn append(&mut self, record: &AnnotationRecord) -> Result<(), DatasetError> {
        let io_err = |source| DatasetError::Io {
            path: self.path.clone(),
            source,
        };
        let mut line = record_line(record);
        line.push('\n');
        self.out.write_all(line.as_bytes()).map_err(io_err)?;
        self.out.flush().map_err(io_err)
    }
}

/// Append records after checking each references a manifest clip.
pub fn write_annotations(
    records: &[AnnotationRecord],
    manifest: &DatasetManifest,
    path: &Path,
) -> Result<usize, DatasetError> {
    let ids: HashSet<&str> = manifest.assets.iter().map(|a| a.video_id.as_str()).collect();
    if let Some(r) = records.iter().find(|r| !ids.contains(r.video_id.as_str())) {
        return Err(DatasetError::UnknownVideo(r.video_id.clone()));
    }
    let mut writer = AnnotationWriter::open(path)?;
    for r in records {
        writer.append(r)?;
    }
    Ok(records.len())
}

/// Every line of the store, in file order. A missing file reads as empty.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, DatasetError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(DatasetError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| DatasetError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Latest record per `(video_id, strategy)`, ordered by first appearance.
pub fn latest_records(records: Vec<AnnotationRecord>) -> Vec<AnnotationRecord> {
    let mut slot: HashMap<(String, PromptStrategy), usize> = HashMap::new();
    let mut out: Vec<AnnotationRecord> = Vec::new();
    for r in records {
        let key = (r.video_id.clone(), r.strategy);
        match slot.get(&key) {
            Some(&i) => out[i] = r,
            None => {
                slot.insert(key, out.len());
                out.push(r);
            }
        }
    }
    out
}

pub fn read_latest_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, DatasetError> {
    read_annotations(path).map(latest_records)
}
