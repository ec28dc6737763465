//! Multifacet video annotation and text-video retrieval evaluation.
//!
//! The annotation side turns a video into four facets (visual captions,
//! dialogue transcript, emotional tone, dominant colour style), renders them
//! as an information chunk, and asks a language model to compose a holistic
//! caption under one of four prompt strategies. The evaluation side computes
//! r@k metrics over text-to-video similarity matrices and lays them out as a
//! 2x2 benchmark grid per retrieval model.
//!
//! Every ML model sits behind an HTTP adapter protocol; deterministic mock
//! backends make the whole pipeline runnable offline.

pub mod chunk;
pub mod config;
pub mod dataset;
pub mod gateway;
pub mod hashing;
pub mod limiter;
pub mod llm;
pub mod media;
pub mod pipeline;
pub mod prompt;
pub mod retrieval;
pub mod scalar;
pub mod style;
pub mod tone;
pub mod transport;

pub use scalar::Scalar;

/// Similarity matrix with single-precision scores, the on-disk format's native width.
pub type SimilarityMatrixF32 = retrieval::SimilarityMatrix<f32>;
/// Similarity matrix with double-precision scores.
pub type SimilarityMatrixF64 = retrieval::SimilarityMatrix<f64>;
/// RGB centroid with double-precision components.
pub type Rgb64 = style::kmeans::Rgb<f64>;
/// RGB centroid with single-precision components.
pub type Rgb32 = style::kmeans::Rgb<f32>;
/// K-means fit over double-precision pixels, as used by the style captioner.
pub type KmeansFit64 = style::kmeans::KmeansFit<f64>;
