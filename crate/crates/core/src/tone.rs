//! Video-level tone: the modal per-frame emotion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gateway::EmotionLabel;

/// Tie-break order when several emotions share the top count. Expressive
/// emotions come first; `neutral` is last.
pub const TIE_BREAK_PRIORITY: [EmotionLabel; 8] = [
    EmotionLabel::Happy,
    EmotionLabel::Surprise,
    EmotionLabel::Sad,
    EmotionLabel::Anger,
    EmotionLabel::Fear,
    EmotionLabel::Disgust,
    EmotionLabel::Contempt,
    EmotionLabel::Neutral,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToneAnnotation {
    pub tone: EmotionLabel,
    pub counts: BTreeMap<EmotionLabel, u32>,
    pub frames_considered: u32,
}

impl ToneAnnotation {
    /// A tone with no supporting counts, as recovered from chunk text.
    pub fn from_label(tone: EmotionLabel) -> Self {
        Self {
            tone,
            counts: BTreeMap::new(),
            frames_considered: 0,
        }
    }
}

fn priority(label: EmotionLabel) -> usize {
    TIE_BREAK_PRIORITY
        .iter()
        .position(|&l| l == label)
        .unwrap_or(TIE_BREAK_PRIORITY.len())
}

/// Count labels, ignoring `no_face`, and pick the most frequent. With nothing
/// to count the tone falls back to `neutral`.
pub fn aggregate_tone(labels: &[EmotionLabel]) -> ToneAnnotation {
    let mut counts = BTreeMap::new();
    for &label in labels.iter().filter(|l| l.is_emotion()) {
        *counts.entry(label).or_insert(0u32) += 1;
    }
    let frames_considered = counts.values().sum();
    let tone = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| priority(*b.0).cmp(&priority(*a.0))))
        .map(|(&label, _)| label)
        .unwrap_or(EmotionLabel::Neutral);
    ToneAnnotation {
        tone,
        counts,
        frames_considered,
    }
}
