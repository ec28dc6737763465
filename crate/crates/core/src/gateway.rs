//! Client for the three perception experts: frame captioner, dialogue
//! transcriber, and facial emotion detector.
//!
//! Each expert is either an HTTP adapter speaking the `/v1/*` JSON protocol
//! or the built-in mock. Mocks are pure functions of the request content, so
//! golden tests are byte-exact on any host.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::hashing::content_hash;
use crate::limiter::{InFlightLimiter, RetryPolicy};
use crate::media::{AudioTrack, FrameSample};
use crate::transport::{self, TransportError};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("{expert} backend returned an empty caption")]
    EmptyCaption { expert: ExpertKind },
    #[error("emotion backend returned out-of-vocabulary label {0:?}")]
    UnknownEmotion(String),
    #[error("{expert} backend returned malformed data: {message}")]
    Malformed { expert: ExpertKind, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertKind {
    Caption,
    Transcribe,
    Emotion,
}

impl fmt::Display for ExpertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Caption => "caption",
            Self::Transcribe => "transcribe",
            Self::Emotion => "emotion",
        })
    }
}

/// Where an expert lives: the in-process mock or an HTTP base URL.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BackendRef {
    Mock,
    Http(String),
}

impl BackendRef {
    pub fn is_mock(&self) -> bool {
        matches!(self, Self::Mock)
    }

    pub fn identifier(&self) -> String {
        match self {
            Self::Mock => "mock".to_owned(),
            Self::Http(url) => url.clone(),
        }
    }
}

impl FromStr for BackendRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("mock") {
            Ok(Self::Mock)
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(Self::Http(s.trim_end_matches('/').to_owned()))
        } else {
            Err(format!("backend must be \"mock\" or an http(s) URL, got {s:?}"))
        }
    }
}

impl Serialize for BackendRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.identifier())
    }
}

impl<'de> Deserialize<'de> for BackendRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The eight discrete emotions plus the gateway-level `no_face` sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmotionLabel {
    Neutral,
    Disgust,
    Happy,
    Anger,
    Contempt,
    Sad,
    Fear,
    Surprise,
    NoFace,
}

impl EmotionLabel {
    /// The eight emotions, in the order the emotion model reports them.
    pub const EMOTIONS: [EmotionLabel; 8] = [
        Self::Neutral,
        Self::Disgust,
        Self::Happy,
        Self::Anger,
        Self::Contempt,
        Self::Sad,
        Self::Fear,
        Self::Surprise,
    ];

    pub const ALL: [EmotionLabel; 9] = [
        Self::Neutral,
        Self::Disgust,
        Self::Happy,
        Self::Anger,
        Self::Contempt,
        Self::Sad,
        Self::Fear,
        Self::Surprise,
        Self::NoFace,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Neutral => "neutral",
            Self::Disgust => "disgust",
            Self::Happy => "happy",
            Self::Anger => "anger",
            Self::Contempt => "contempt",
            Self::Sad => "sad",
            Self::Fear => "fear",
            Self::Surprise => "surprise",
            Self::NoFace => "no_face",
        }
    }

    pub fn is_emotion(self) -> bool {
        self != Self::NoFace
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionLabel {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| GatewayError::UnknownEmotion(s.to_owned()))
    }
}

/// `frameNN` label: 1-based, zero-padded to two digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrameLabel(u32);

impl FrameLabel {
    pub fn new(number: u32) -> Option<Self> {
        (number >= 1).then_some(Self(number))
    }

    pub fn number(self) -> u32 {
        self.0
    }
}

impl fmt::Display for FrameLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "frame{:02}", self.0)
    }
}

impl FromStr for FrameLabel {
    type Err = String;

    /// Accepts only the canonical rendering, so parse and display are inverse.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix("frame")
            .ok_or_else(|| format!("frame label {s:?} must start with \"frame\""))?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("frame label {s:?} must end in digits"));
        }
        let n: u32 = digits.parse().map_err(|e| format!("{s:?}: {e}"))?;
        let label = Self::new(n).ok_or_else(|| format!("frame label {s:?} must be >= 1"))?;
        if label.to_string() != s {
            return Err(format!("frame label {s:?} is not canonically padded"));
        }
        Ok(label)
    }
}

impl Serialize for FrameLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FrameLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualEntry {
    pub frame_label: FrameLabel,
    pub caption: String,
}

/// Ordered per-frame captions. Labels strictly increase, at least one entry,
/// no empty captions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VisualAnnotation {
    entries: Vec<VisualEntry>,
}

impl VisualAnnotation {
    pub fn new(entries: Vec<VisualEntry>) -> Result<Self, String> {
        if entries.is_empty() {
            return Err("visual annotation needs at least one entry".into());
        }
        for pair in entries.windows(2) {
            if pair[0].frame_label >= pair[1].frame_label {
                return Err(format!(
                    "frame labels must strictly increase ({} then {})",
                    pair[0].frame_label, pair[1].frame_label
                ));
            }
        }
        if let Some(e) = entries.iter().find(|e| e.caption.is_empty()) {
            return Err(format!("{} has an empty caption", e.frame_label));
        }
        Ok(Self { entries })
    }

    /// Label captions `frame01`, `frame02`, ... in order.
    pub fn from_captions<I, S>(captions: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries = captions
            .into_iter()
            .enumerate()
            .map(|(i, c)| VisualEntry {
                frame_label: FrameLabel(i as u32 + 1),
                caption: c.into(),
            })
            .collect();
        Self::new(entries)
    }

    pub fn entries(&self) -> &[VisualEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<'de> Deserialize<'de> for VisualAnnotation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            entries: Vec<VisualEntry>,
        }
        let raw = Raw::deserialize(d)?;
        Self::new(raw.entries).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueAnnotation {
    pub transcript_en: String,
    pub detected_language: String,
    pub was_translated: bool,
    pub present: bool,
}

impl DialogueAnnotation {
    pub fn absent() -> Self {
        Self {
            transcript_en: String::new(),
            detected_language: String::new(),
            was_translated: false,
            present: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthInfo {
    pub expert: ExpertKind,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub caption: BackendRef,
    pub transcribe: BackendRef,
    pub emotion: BackendRef,
    pub max_in_flight: usize,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            caption: BackendRef::Mock,
            transcribe: BackendRef::Mock,
            emotion: BackendRef::Mock,
            max_in_flight: 4,
            retries: 3,
            backoff_ms: 100,
            timeout_s: 60,
        }
    }
}

impl GatewayConfig {
    pub fn all_mock() -> Self {
        Self::default()
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            retries: self.retries,
            base_delay: Duration::from_millis(self.backoff_ms),
            ..RetryPolicy::default()
        }
    }

    pub fn backend(&self, kind: ExpertKind) -> &BackendRef {
        match kind {
            ExpertKind::Caption => &self.caption,
            ExpertKind::Transcribe => &self.transcribe,
            ExpertKind::Emotion => &self.emotion,
        }
    }
}

struct Backend {
    reference: BackendRef,
    limiter: Arc<InFlightLimiter>,
}

/// Shareable across worker threads; the limiters are the only mutable state.
pub struct ExpertGateway {
    caption: Backend,
    transcribe: Backend,
    emotion: Backend,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl ExpertGateway {
    pub fn new(config: &GatewayConfig) -> Self {
        let backend = |reference: &BackendRef| Backend {
            reference: reference.clone(),
            limiter: Arc::new(InFlightLimiter::new(config.max_in_flight)),
        };
        Self {
            caption: backend(&config.caption),
            transcribe: backend(&config.transcribe),
            emotion: backend(&config.emotion),
            agent: transport::build_agent(Duration::from_secs(config.timeout_s)),
            retry: config.retry_policy(),
        }
    }

    pub fn mock() -> Self {
        Self::new(&GatewayConfig::all_mock())
    }

    fn backend(&self, kind: ExpertKind) -> &Backend {
        match kind {
            ExpertKind::Caption => &self.caption,
            ExpertKind::Transcribe => &self.transcribe,
            ExpertKind::Emotion => &self.emotion,
        }
    }

    pub fn backend_ref(&self, kind: ExpertKind) -> &BackendRef {
        &self.backend(kind).reference
    }

    fn post(
        &self,
        kind: ExpertKind,
        base: &str,
        path: &str,
        body: &serde_json::Value,
    ) -> Result<serde_json::Value, GatewayError> {
        let url = transport::join_url(base, path);
        let limiter = &self.backend(kind).limiter;
        Ok(transport::post_json(&self.agent, &url, body, limiter, &self.retry)?)
    }

    pub fn caption_frame(&self, frame: &FrameSample) -> Result<String, GatewayError> {
        let caption = match &self.caption.reference {
            BackendRef::Mock => mock_caption(frame),
            BackendRef::Http(base) => {
                let resp = self.post(ExpertKind::Caption, base, "/v1/caption", &frame_body(frame))?;
                let url = transport::join_url(base, "/v1/caption");
                transport::string_field(&url, &resp, "caption")?
            }
        };
        let caption = caption.trim().to_owned();
        if caption.is_empty() {
            return Err(GatewayError::EmptyCaption {
                expert: ExpertKind::Caption,
            });
        }
        Ok(caption)
    }

    /// Detect the language, then re-run with the translate task when the
    /// speech is not English.
    pub fn transcribe(&self, audio: Option<&AudioTrack>) -> Result<DialogueAnnotation, GatewayError> {
        let Some(audio) = audio else {
            return Ok(DialogueAnnotation::absent());
        };
        let base = match &self.transcribe.reference {
            BackendRef::Mock => return Ok(mock_transcript(audio)),
            BackendRef::Http(base) => base,
        };
        let url = transport::join_url(base, "/v1/transcribe");
        let pcm = base64::engine::general_purpose::STANDARD.encode(audio.pcm16_le_bytes());
        let body = |task: &str| {
            json!({
                "video_id": audio.video_id,
                "pcm16_base64": pcm,
                "sample_rate_hz": audio.sample_rate_hz,
                "task": task,
            })
        };
        let first = self.post(ExpertKind::Transcribe, base, "/v1/transcribe", &body("transcribe"))?;
        let language = transport::string_field(&url, &first, "language")?;
        let (text, was_translated) = if is_english(&language) {
            (transport::string_field(&url, &first, "text")?, false)
        } else {
            let second =
                self.post(ExpertKind::Transcribe, base, "/v1/transcribe", &body("translate"))?;
            (transport::string_field(&url, &second, "text")?, true)
        };
        Ok(DialogueAnnotation {
            transcript_en: text.trim().to_owned(),
            detected_language: language,
            was_translated,
            present: true,
        })
    }

    pub fn detect_emotion(&self, frame: &FrameSample) -> Result<EmotionLabel, GatewayError> {
        match &self.emotion.reference {
            BackendRef::Mock => Ok(mock_emotion(frame)),
            BackendRef::Http(base) => {
                let resp = self.post(ExpertKind::Emotion, base, "/v1/emotion", &frame_body(frame))?;
                let url = transport::join_url(base, "/v1/emotion");
                transport::string_field(&url, &resp, "label")?.parse()
            }
        }
    }

    pub fn health(&self, kind: ExpertKind) -> Result<HealthInfo, GatewayError> {
        let backend = self.backend(kind);
        match &backend.reference {
            BackendRef::Mock => Ok(HealthInfo {
                expert: kind,
                version: format!("mock-{}", env!("CARGO_PKG_VERSION")),
            }),
            BackendRef::Http(base) => {
                let url = transport::join_url(base, "/healthz");
                let value = transport::get_json(&self.agent, &url, &backend.limiter, &self.retry)?;
                serde_json::from_value(value).map_err(|e| GatewayError::Malformed {
                    expert: kind,
                    message: e.to_string(),
                })
            }
        }
    }
}

fn is_english(language: &str) -> bool {
    let lang = language.trim().to_ascii_lowercase();
    lang == "en" || lang.starts_with("en-") || lang == "english"
}

fn frame_body(frame: &FrameSample) -> serde_json::Value {
    json!({
        "video_id": frame.video_id,
        "frame_index": frame.index,
        "png_base64": base64::engine::general_purpose::STANDARD.encode(frame.encode_png()),
    })
}

pub fn mock_caption(frame: &FrameSample) -> String {
    let hash = content_hash(&frame.content_bytes());
    format!("mock object at {:08x}", hash >> 32)
}

pub fn mock_emotion(frame: &FrameSample) -> EmotionLabel {
    let hash = content_hash(&frame.content_bytes());
    EmotionLabel::EMOTIONS[(hash % 8) as usize]
}

pub fn mock_transcript(audio: &AudioTrack) -> DialogueAnnotation {
    DialogueAnnotation {
        transcript_en: format!("mock speech {:.1}", audio.duration_s),
        detected_language: "en".to_owned(),
        was_translated: false,
        present: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_labels_pad_to_two_then_three() {
        assert_eq!(FrameLabel::new(1).unwrap().to_string(), "frame01");
        assert_eq!(FrameLabel::new(15).unwrap().to_string(), "frame15");
        assert_eq!(FrameLabel::new(100).unwrap().to_string(), "frame100");
        assert_eq!("frame07".parse::<FrameLabel>().unwrap().number(), 7);
        assert!("frame7".parse::<FrameLabel>().is_err());
        assert!("frame00".parse::<FrameLabel>().is_err());
        assert!("frame099".parse::<FrameLabel>().is_err());
    }

    #[test]
    fn visual_annotation_invariants() {
        assert!(VisualAnnotation::from_captions(Vec::<String>::new()).is_err());
        assert!(VisualAnnotation::from_captions(["a", ""]).is_err());
        let e = |n, c: &str| VisualEntry {
            frame_label: FrameLabel::new(n).unwrap(),
            caption: c.into(),
        };
        assert!(VisualAnnotation::new(vec![e(2, "a"), e(1, "b")]).is_err());
        assert!(VisualAnnotation::new(vec![e(2, "a"), e(2, "b")]).is_err());
        assert!(VisualAnnotation::new(vec![e(1, "a"), e(5, "b")]).is_ok());
    }

    #[test]
    fn emotion_vocabulary_is_closed() {
        for label in EmotionLabel::ALL {
            assert_eq!(label.as_str().parse::<EmotionLabel>().unwrap(), label);
        }
        assert!(matches!(
            "ecstatic".parse::<EmotionLabel>(),
            Err(GatewayError::UnknownEmotion(s)) if s == "ecstatic"
        ));
    }

    #[test]
    fn mocks_are_deterministic() {
        let gw = ExpertGateway::mock();
        let frame = FrameSample::solid("v", 0, 4, 4, [10, 20, 30]);
        let same = FrameSample::solid("other-video", 9, 4, 4, [10, 20, 30]);
        let c = gw.caption_frame(&frame).unwrap();
        assert!(c.starts_with("mock object at "));
        assert_eq!(c.len(), "mock object at ".len() + 8);
        assert_eq!(c, gw.caption_frame(&same).unwrap());
        let label = gw.detect_emotion(&frame).unwrap();
        assert!(label.is_emotion());
        assert_eq!(label, gw.detect_emotion(&same).unwrap());
    }

    #[test]
    fn mock_caption_golden() {
        // Pinned so a change to the hash or content encoding is noticed.
        let frame = FrameSample::solid("v", 0, 2, 2, [0, 0, 0]);
        let expected = format!(
            "mock object at {:08x}",
            content_hash(&[2, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]) >> 32
        );
        assert_eq!(mock_caption(&frame), expected);
    }

    #[test]
    fn mock_emotion_covers_all_eight() {
        let mut seen = std::collections::BTreeSet::new();
        for v in 0..=255u8 {
            seen.insert(mock_emotion(&FrameSample::solid("v", 0, 1, 1, [v, 0, 0])));
        }
        assert_eq!(seen.len(), 8);
        assert!(!seen.contains(&EmotionLabel::NoFace));
    }

    #[test]
    fn absent_audio_gives_absent_dialogue() {
        let d = ExpertGateway::mock().transcribe(None).unwrap();
        assert_eq!(d, DialogueAnnotation::absent());
        assert!(!d.present && d.transcript_en.is_empty() && !d.was_translated);
    }

    #[test]
    fn mock_transcript_rounds_duration() {
        let track = AudioTrack::new("v", vec![0; 16_000 * 10 + 800], 16_000);
        let d = ExpertGateway::mock().transcribe(Some(&track)).unwrap();
        assert_eq!(d.transcript_en, "mock speech 10.1");
        assert!(d.present && !d.was_translated);
        assert_eq!(d.detected_language, "en");
    }

    #[test]
    fn backend_ref_parsing() {
        assert_eq!("mock".parse::<BackendRef>().unwrap(), BackendRef::Mock);
        assert_eq!(
            "http://localhost:9000/".parse::<BackendRef>().unwrap(),
            BackendRef::Http("http://localhost:9000".into())
        );
        assert!("ftp://x".parse::<BackendRef>().is_err());
    }
}
