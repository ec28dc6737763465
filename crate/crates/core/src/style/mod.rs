//! Video-level style facet: the two most frequent dominant-colour names.
//!
//! Each frame is clustered into `k` (default 2) colours, every centroid is
//! mapped to its nearest CSS3 name, and names are counted across frames.

pub mod colors;
pub mod kmeans;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::{content_hash, fan_out_seed};
use crate::media::FrameSample;

pub use colors::{nearest_color_name, ColorTable};
pub use kmeans::{kmeans_colors, KmeansParams};

#[derive(Debug, Error)]
pub enum StyleError {
    #[error("frame has no pixels")]
    EmptyFrame,
    #[error("no frames to analyse")]
    NoFrames,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("colour table: {0}")]
    ColorTable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameColors {
    pub frame_index: u32,
    pub centroids: Vec<[u8; 3]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleAnnotation {
    /// One or two names, highest count first, ties by name.
    pub top_colors: Vec<String>,
    pub histogram: BTreeMap<String, u32>,
    pub per_frame: Vec<FrameColors>,
}

impl StyleAnnotation {
    /// An annotation carrying only the names, as recovered from chunk text.
    pub fn from_names(names: Vec<String>) -> Self {
        Self {
            top_colors: names,
            histogram: BTreeMap::new(),
            per_frame: Vec::new(),
        }
    }
}

/// The two highest-count names; count ties go to the smaller name.
pub fn top_names(histogram: &BTreeMap<String, u32>, n: usize) -> Vec<String> {
    let mut ranked: Vec<(&String, &u32)> = histogram.iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(n).map(|(name, _)| name.clone()).collect()
}

/// Seed used for one frame. Derived from frame content rather than position
/// so the result does not depend on frame order.
pub fn frame_seed(seed: u64, frame: &FrameSample) -> u64 {
    fan_out_seed(seed, &content_hash(&frame.content_bytes()).to_le_bytes())
}

pub fn video_style(
    frames: &[FrameSample],
    seed: u64,
    params: &KmeansParams,
    table: &ColorTable,
) -> Result<StyleAnnotation, StyleError> {
    if frames.is_empty() {
        return Err(StyleError::NoFrames);
    }
    let mut histogram = BTreeMap::new();
    let mut per_frame = Vec::with_capacity(frames.len());
    for frame in frames {
        let frame_params = KmeansParams {
            seed: frame_seed(seed, frame),
            ..*params
        };
        let centroids: Vec<[u8; 3]> = kmeans_colors::<f64>(frame, &frame_params)?
            .iter()
            .map(kmeans::to_rgb8)
            .collect();
        for c in &centroids {
            *histogram.entry(table.nearest(*c).to_owned()).or_insert(0) += 1;
        }
        per_frame.push(FrameColors {
            frame_index: frame.index,
            centroids,
        });
    }
    Ok(StyleAnnotation {
        top_colors: top_names(&histogram, 2),
        histogram,
        per_frame,
    })
}
