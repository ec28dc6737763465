//! Pipeline configuration: one JSON document, every field optional except
//! where a stage needs it. Relative paths resolve against the config file's
//! directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunk::DEFAULT_MAX_VISUAL_ENTRIES;
use crate::gateway::{BackendRef, GatewayConfig};
use crate::llm::LlmConfig;
use crate::media::MediaConfig;
use crate::prompt::PromptStrategy;
use crate::retrieval::{PairSet, ReportFormat};
use crate::style::kmeans::KmeansParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: config schema error: {source}")]
    Schema {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingRates {
    pub visual_fps: f64,
    pub tone_fps: f64,
    pub style_fps: f64,
}

impl Default for SamplingRates {
    fn default() -> Self {
        Self {
            visual_fps: 4.0,
            tone_fps: 2.0,
            style_fps: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmeansSettings {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub max_pixels: usize,
}

impl Default for KmeansSettings {
    fn default() -> Self {
        let p = KmeansParams::default();
        Self {
            k: p.k,
            max_iter: p.max_iter,
            tol: p.tol,
            max_pixels: p.max_pixels,
        }
    }
}

impl KmeansSettings {
    pub fn params(&self, seed: u64) -> KmeansParams {
        KmeansParams {
            k: self.k,
            seed,
            max_iter: self.max_iter,
            tol: self.tol,
            max_pixels: self.max_pixels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    /// JSONL annotation store.
    pub store: PathBuf,
    /// Where to write the audio exclusion report, if anywhere.
    pub exclusion_report: Option<PathBuf>,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            store: PathBuf::from("annotations.jsonl"),
            exclusion_report: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub training_pairs: PairSet,
    pub query_pairs: PairSet,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMatrices {
    pub name: String,
    pub matrices: Vec<MatrixFile>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub models: Vec<ModelMatrices>,
    /// Report destination; printed only when absent.
    pub report: Option<PathBuf>,
    pub format: ReportFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: Option<PathBuf>,
    pub exclude_audioless: bool,
    pub sampling: SamplingRates,
    pub experts: GatewayConfig,
    pub llm: LlmConfig,
    pub strategy: PromptStrategy,
    /// Directory with custom strategy texts and their SHA256SUMS.
    pub prompts_dir: Option<PathBuf>,
    pub seed: u64,
    pub workers: usize,
    pub media: MediaConfig,
    pub visual_max_entries: usize,
    pub kmeans: KmeansSettings,
    pub output: OutputPaths,
    pub evaluation: EvaluationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            exclude_audioless: true,
            sampling: SamplingRates::default(),
            experts: GatewayConfig::default(),
            llm: LlmConfig::default(),
            strategy: PromptStrategy::default(),
            prompts_dir: None,
            seed: 0,
            workers: 4,
            media: MediaConfig::default(),
            visual_max_entries: DEFAULT_MAX_VISUAL_ENTRIES,
            kmeans: KmeansSettings::default(),
            output: OutputPaths::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|source| ConfigError::Schema {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Parse, resolve relative paths, and validate.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_json(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.manifest, &mut self.prompts_dir, &mut self.output.exclusion_report, &mut self.evaluation.report]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        resolve(base, &mut self.output.store);
        for m in &mut self.evaluation.models {
            for f in &mut m.matrices {
                resolve(base, &mut f.path);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        for (name, rate) in [
            ("sampling.visual_fps", self.sampling.visual_fps),
            ("sampling.tone_fps", self.sampling.tone_fps),
            ("sampling.style_fps", self.sampling.style_fps),
        ] {
            if !(rate.is_finite() && rate > 0.0) {
                return bad(format!("{name} must be a positive number, got {rate}"));
            }
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.experts.max_in_flight == 0 || self.llm.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1".into());
        }
        if self.visual_max_entries == 0 {
            return bad("visual_max_entries must be at least 1".into());
        }
        let k = &self.kmeans;
        if k.k == 0 || k.max_iter == 0 || k.max_pixels == 0 || !(k.tol.is_finite() && k.tol >= 0.0) {
            return bad("kmeans: k, max_iter and max_pixels must be positive and tol non-negative".into());
        }
        if !(self.llm.temperature.is_finite() && self.llm.temperature >= 0.0) {
            return bad(format!("llm.temperature must be non-negative, got {}", self.llm.temperature));
        }
        let mut names = HashSet::new();
        for m in &self.evaluation.models {
            if m.name.trim().is_empty() {
                return bad("evaluation model names must be non-empty".into());
            }
            if !names.insert(m.name.as_str()) {
                return bad(format!("duplicate evaluation model {:?}", m.name));
            }
        }
        Ok(())
    }

    /// Route every expert and the language model to the built-in mocks.
    pub fn apply_mock_all(&mut self) {
        self.experts.caption = BackendRef::Mock;
        self.experts.transcribe = BackendRef::Mock;
        self.experts.emotion = BackendRef::Mock;
        self.llm.endpoint = BackendRef::Mock;
    }

    pub fn all_mock(&self) -> bool {
        [&self.experts.caption, &self.experts.transcribe, &self.experts.emotion, &self.llm.endpoint]
            .iter()
            .all(|b| b.is_mock())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::from_json("{}", Path::new("c.json")).unwrap();
        assert_eq!(c.sampling, SamplingRates { visual_fps: 4.0, tone_fps: 2.0, style_fps: 2.0 });
        assert_eq!(c.strategy, PromptStrategy::Rule);
        assert_eq!(c.visual_max_entries, 15);
        assert_eq!(c.kmeans.k, 2);
        assert!(c.exclude_audioless);
        assert!(c.all_mock());
        c.validate().unwrap();
    }

    #[test]
    fn schema_errors() {
        for bad in [r#"{"strategy": "few_shot"}"#, r#"{"sampling": {"fps": 2}}"#, r#"{"colour": 1}"#, "[1]"] {
            assert!(matches!(
                PipelineConfig::from_json(bad, Path::new("c.json")),
                Err(ConfigError::Schema { .. })
            ));
        }
    }

    #[test]
    fn validation() {
        let mut c = PipelineConfig::default();
        c.sampling.tone_fps = 0.0;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.workers = 0;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.sampling.style_fps = f64::NAN;
        assert!(c.validate().is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pipeline.json");
        fs::write(
            &path,
            r#"{"manifest": "m.json", "output": {"store": "/abs/out.jsonl"},
                "evaluation": {"models": [{"name": "A", "matrices": [
                  {"training_pairs": "original", "query_pairs": "improved", "path": "a.csv"}]}]}}"#,
        )
        .unwrap();
        let c = PipelineConfig::load(&path).unwrap();
        assert_eq!(c.manifest.unwrap(), dir.path().join("m.json"));
        assert_eq!(c.output.store, PathBuf::from("/abs/out.jsonl"));
        assert_eq!(c.evaluation.models[0].matrices[0].path, dir.path().join("a.csv"));
    }

    #[test]
    fn mock_all_overrides_endpoints() {
        let mut c = PipelineConfig::from_json(
            r#"{"experts": {"caption": "http://127.0.0.1:8001"}, "llm": {"endpoint": "http://127.0.0.1:8004"}}"#,
            Path::new("c.json"),
        )
        .unwrap();
        assert!(!c.all_mock());
        c.apply_mock_all();
        assert!(c.all_mock());
    }
}
