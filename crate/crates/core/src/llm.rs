//! Chat-completion client for composing holistic captions, and the lexical
//! check that flags colours and emotions the chunk does not license.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::chunk::{parse_chunk, ChunkFacets, GrammarError};
use crate::gateway::{BackendRef, EmotionLabel};
use crate::limiter::{InFlightLimiter, RetryPolicy};
use crate::prompt::{chunk_from_prompt, PromptStrategy, RenderedPrompt};
use crate::style::ColorTable;
use crate::transport::{self, TransportError};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("language model returned an empty completion")]
    EmptyCompletion,
    #[error("mock endpoint could not find a valid chunk in the prompt: {0}")]
    MockPrompt(#[source] GrammarError),
}

/// Words that count as naming each emotion.
pub const EMOTION_SYNONYMS: [(EmotionLabel, &[&str]); 8] = [
    (EmotionLabel::Neutral, &["neutral", "impassive", "expressionless"]),
    (EmotionLabel::Disgust, &["disgust", "disgusted", "disgusting", "revulsion"]),
    (EmotionLabel::Happy, &["happy", "happiness", "joy", "joyful", "cheerful", "delighted"]),
    (EmotionLabel::Anger, &["anger", "angry", "furious", "rage", "irritated"]),
    (EmotionLabel::Contempt, &["contempt", "contemptuous", "disdain", "scorn"]),
    (EmotionLabel::Sad, &["sad", "sadness", "sorrow", "sorrowful", "unhappy", "melancholy"]),
    (EmotionLabel::Fear, &["fear", "afraid", "scared", "fearful", "frightened", "terrified"]),
    (
        EmotionLabel::Surprise,
        &["surprise", "surprised", "surprising", "amazed", "amazement", "astonished", "astonishment"],
    ),
];

pub fn emotion_of_word(word: &str) -> Option<EmotionLabel> {
    EMOTION_SYNONYMS
        .iter()
        .find(|(_, words)| words.contains(&word))
        .map(|(label, _)| *label)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub flagged_colors: Vec<String>,
    pub flagged_emotions: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolisticCaption {
    pub video_id: String,
    pub strategy: PromptStrategy,
    pub prompt_hash: String,
    pub text: String,
    pub model_id: String,
    pub sampling: Sampling,
    pub validation: ValidationReport,
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Scan `text` for colour names and emotion words. A term is licensed when it
/// is one of the chunk's style colours or its tone (synonyms included), or
/// when the chunk's own captions or dialogue already contain it.
pub fn validate_caption(text: &str, chunk: &ChunkFacets) -> ValidationReport {
    let table = ColorTable::css3();
    let mut chunk_words: BTreeSet<String> = words(&chunk.dialogue).collect();
    for entry in chunk.visual.entries() {
        chunk_words.extend(words(&entry.caption));
    }

    let mut flagged_colors: Vec<String> = Vec::new();
    let mut flagged_emotions: Vec<String> = Vec::new();
    for word in words(text) {
        if table.contains(&word) {
            let licensed = chunk.style.contains(&word) || chunk_words.contains(&word);
            if !licensed && !flagged_colors.contains(&word) {
                flagged_colors.push(word);
            }
        } else if let Some(emotion) = emotion_of_word(&word) {
            let licensed = emotion == chunk.tone || chunk_words.contains(&word);
            if !licensed && !flagged_emotions.contains(&word) {
                flagged_emotions.push(word);
            }
        }
    }
    let passed = flagged_colors.is_empty() && flagged_emotions.is_empty();
    ValidationReport {
        flagged_colors,
        flagged_emotions,
        passed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: BackendRef,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    pub max_in_flight: usize,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: BackendRef::Mock,
            model: "llama-2-7b-chat".to_owned(),
            temperature: 0.2,
            max_tokens: 300,
            seed: None,
            max_in_flight: 4,
            retries: 3,
            backoff_ms: 100,
            timeout_s: 120,
        }
    }
}

pub struct LlmClient {
    config: LlmConfig,
    agent: ureq::Agent,
    limiter: Arc<InFlightLimiter>,
    retry: RetryPolicy,
}

impl LlmClient {
    pub fn new(config: LlmConfig) -> Self {
        let retry = RetryPolicy {
            retries: config.retries,
            base_delay: Duration::from_millis(config.backoff_ms),
            ..RetryPolicy::default()
        };
        Self {
            agent: transport::build_agent(Duration::from_secs(config.timeout_s)),
            limiter: Arc::new(InFlightLimiter::new(config.max_in_flight)),
            retry,
            config,
        }
    }

    pub fn mock() -> Self {
        Self::new(LlmConfig::default())
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn model_id(&self) -> String {
        match &self.config.endpoint {
            BackendRef::Mock => "mock".to_owned(),
            BackendRef::Http(_) => self.config.model.clone(),
        }
    }

    pub fn complete(&self, prompt: &RenderedPrompt) -> Result<String, LlmError> {
        let text = match &self.config.endpoint {
            BackendRef::Mock => mock_completion(&prompt.text)?,
            BackendRef::Http(base) => {
                let url = transport::join_url(base, "/v1/chat");
                let mut body = json!({
                    "model": self.config.model,
                    "messages": [{"role": "user", "content": prompt.text}],
                    "temperature": self.config.temperature,
                    "max_tokens": self.config.max_tokens,
                });
                if let Some(seed) = self.config.seed {
                    body["seed"] = json!(seed);
                }
                let resp = transport::post_json(&self.agent, &url, &body, &self.limiter, &self.retry)?;
                transport::string_field(&url, &resp, "text")?
            }
        };
        let text = text.trim().to_owned();
        if text.is_empty() {
            return Err(LlmError::EmptyCompletion);
        }
        Ok(text)
    }

    /// Complete and validate. A failed validation is recorded, not raised.
    pub fn compose_caption(
        &self,
        video_id: &str,
        prompt: &RenderedPrompt,
        chunk: &ChunkFacets,
    ) -> Result<HolisticCaption, LlmError> {
        let text = self.complete(prompt)?;
        let validation = validate_caption(&text, chunk);
        Ok(HolisticCaption {
            video_id: video_id.to_owned(),
            strategy: prompt.strategy,
            prompt_hash: format!("{:016x}", prompt.prompt_hash()),
            text,
            model_id: self.model_id(),
            sampling: Sampling {
                temperature: self.config.temperature,
                max_tokens: self.config.max_tokens,
                seed: self.config.seed,
            },
            validation,
        })
    }
}

const SNIPPET_WORDS: usize = 12;

/// Deterministic stand-in for the language model: stitches the chunk's
/// style, first and last captions, a dialogue snippet and the tone.
pub fn mock_completion(prompt: &str) -> Result<String, LlmError> {
    let chunk_text = chunk_from_prompt(prompt).unwrap_or(prompt);
    let facets = parse_chunk(chunk_text).map_err(LlmError::MockPrompt)?;
    let entries = facets.visual.entries();
    let first = &entries[0].caption;
    let last = &entries[entries.len() - 1].caption;

    let mut out = format!("The video, in shades of {}, opens with {first}", facets.style.join(" and "));
    if entries.len() > 1 {
        out.push_str(&format!(" and ends with {last}"));
    }
    out.push('.');
    if !facets.dialogue.is_empty() {
        let snippet: Vec<&str> = facets.dialogue.split_whitespace().take(SNIPPET_WORDS).collect();
        out.push_str(&format!(" We hear: \"{}\".", snippet.join(" ")));
    }
    out.push_str(&format!(" The overall tone is {}.", facets.tone));
    Ok(out)
}
