//! Text-to-video retrieval metrics.
//!
//! Row `i` of a similarity matrix scores text query `i` against every video;
//! the relevant video for query `i` is column `i`. Ranks are 1-based by
//! descending score, and equal scores rank the smaller column index first.

pub mod grid;
pub mod io;
pub mod report;

use std::collections::HashSet;

use thiserror::Error;

use crate::Scalar;

pub use grid::{average_difference, build_grid, BenchmarkGrid, CellCoords, MetricsCell, PairSet};
pub use report::{render_report, ReportFormat};

/// The cut-offs reported per cell.
pub const REPORTED_KS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("similarity matrix must be square: {rows} rows, row {row} has {cols} columns")]
    NotSquare { rows: usize, row: usize, cols: usize },
    #[error("expected {expected} {what} ids, got {got}")]
    IdCount { what: &'static str, expected: usize, got: usize },
    #[error("duplicate {what} id {id:?}")]
    DuplicateId { what: &'static str, id: String },
    #[error("non-finite score at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("k = {k} is outside 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("empty similarity matrix")]
    Empty,
    #[error("{model}: duplicate benchmark cell {coords}")]
    DuplicateCell { model: String, coords: CellCoords },
    #[error("{model}: missing benchmark cell {coords}")]
    MissingCell { model: String, coords: CellCoords },
    #[error("{model}: cells have different sizes ({first} vs {other})")]
    DimensionMismatch { model: String, first: usize, other: usize },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<T> {
    n: usize,
    scores: Vec<T>,
    query_ids: Vec<String>,
    video_ids: Vec<String>,
}

fn check_ids(what: &'static str, ids: &[String], n: usize) -> Result<(), RetrievalError> {
    if ids.len() != n {
        return Err(RetrievalError::IdCount {
            what,
            expected: n,
            got: ids.len(),
        });
    }
    let mut seen = HashSet::with_capacity(n);
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(RetrievalError::DuplicateId { what, id: id.clone() });
        }
    }
    Ok(())
}

pub fn default_ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

impl<T: Scalar> SimilarityMatrix<T> {
    pub fn new(rows: Vec<Vec<T>>, query_ids: Vec<String>, video_ids: Vec<String>) -> Result<Self, RetrievalError> {
        let n = rows.len();
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(RetrievalError::NotSquare {
                rows: n,
                row,
                cols: r.len(),
            });
        }
        Self::from_row_major(n, rows.into_iter().flatten().collect(), query_ids, video_ids)
    }

    pub fn from_row_major(
        n: usize,
        scores: Vec<T>,
        query_ids: Vec<String>,
        video_ids: Vec<String>,
    ) -> Result<Self, RetrievalError> {
        if n == 0 {
            return Err(RetrievalError::Empty);
        }
        if scores.len() != n * n {
            return Err(RetrievalError::NotSquare {
                rows: n,
                row: scores.len() / n,
                cols: scores.len() % n,
            });
        }
        check_ids("query", &query_ids, n)?;
        check_ids("video", &video_ids, n)?;
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(RetrievalError::NonFinite { row: i / n, col: i % n });
        }
        Ok(Self {
            n,
            scores,
            query_ids,
            video_ids,
        })
    }

    /// Square matrix with ids `q0..`/`v0..`.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self, RetrievalError> {
        let n = rows.len();
        Self::new(rows, default_ids("q", n), default_ids("v", n))
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn score(&self, query: usize, video: usize) -> T {
        self.scores[query * self.n + video]
    }

    pub fn row(&self, query: usize) -> &[T] {
        &self.scores[query * self.n..(query + 1) * self.n]
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn query_ids(&self) -> &[String] {
        &self.query_ids
    }

    pub fn video_ids(&self) -> &[String] {
        &self.video_ids
    }

    /// Rank (1-based) of the relevant video for `query`.
    pub fn rank_of_truth(&self, query: usize) -> usize {
        let row = self.row(query);
        let truth = row[query];
        let ahead = row
            .iter()
            .enumerate()
            .filter(|&(j, &s)| s > truth || (s == truth && j < query))
            .count();
        ahead + 1
    }

    pub fn ranks(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.rank_of_truth(i)).collect()
    }

    /// Apply the same permutation to rows, columns and ids:
    /// new index `i` holds old index `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n, "permutation length");
        let mut scores = Vec::with_capacity(self.scores.len());
        for &pi in perm {
            for &pj in perm {
                scores.push(self.score(pi, pj));
            }
        }
        Self {
            n: self.n,
            scores,
            query_ids: perm.iter().map(|&p| self.query_ids[p].clone()).collect(),
            video_ids: perm.iter().map(|&p| self.video_ids[p].clone()).collect(),
        }
    }
}

fn fraction_within(ranks: &[usize], k: usize) -> f64 {
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}

/// Fraction of queries whose relevant video ranks within the top `k`.
pub fn recall_at_k<T: Scalar>(m: &SimilarityMatrix<T>, k: usize) -> Result<f64, RetrievalError> {
    recall_at_ks(m, &[k]).map(|v| v[0])
}

/// Recall at several cut-offs, ranking each query once.
pub fn recall_at_ks<T: Scalar>(m: &SimilarityMatrix<T>, ks: &[usize]) -> Result<Vec<f64>, RetrievalError> {
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > m.size()) {
        return Err(RetrievalError::InvalidK { k, n: m.size() });
    }
    let ranks = m.ranks();
    Ok(ks.iter().map(|&k| fraction_within(&ranks, k)).collect())
}
