//! The 2x2 benchmark grid: {original, improved} training pairs crossed with
//! {original, improved} query pairs.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{recall_at_ks, RetrievalError, SimilarityMatrix, REPORTED_KS};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSet {
    Original,
    Improved,
}

impl fmt::Display for PairSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Original => "original",
            Self::Improved => "improved",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellCoords {
    pub training_pairs: PairSet,
    pub query_pairs: PairSet,
}

impl CellCoords {
    /// Cells [1]..[4] in reading order.
    pub const ALL: [CellCoords; 4] = [
        CellCoords::new(PairSet::Original, PairSet::Original),
        CellCoords::new(PairSet::Original, PairSet::Improved),
        CellCoords::new(PairSet::Improved, PairSet::Original),
        CellCoords::new(PairSet::Improved, PairSet::Improved),
    ];

    pub const fn new(training_pairs: PairSet, query_pairs: PairSet) -> Self {
        Self {
            training_pairs,
            query_pairs,
        }
    }

    /// 1-based cell number.
    pub fn number(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).expect("every coordinate is in ALL") + 1
    }
}

impl fmt::Display for CellCoords {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] trained on {}, queried with {}",
            self.number(),
            self.training_pairs,
            self.query_pairs
        )
    }
}

/// Recall fractions for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsCell {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub coords: CellCoords,
}

impl MetricsCell {
    pub fn values(&self) -> [f64; 3] {
        [self.r1, self.r5, self.r10]
    }

    /// Cell from percentages, as printed in results tables.
    pub fn from_percent(coords: CellCoords, r1: f64, r5: f64, r10: f64) -> Self {
        Self {
            r1: r1 / 100.0,
            r5: r5 / 100.0,
            r10: r10 / 100.0,
            coords,
        }
    }

    pub fn from_matrix<T: Scalar>(coords: CellCoords, m: &SimilarityMatrix<T>) -> Result<Self, RetrievalError> {
        let v = recall_at_ks(m, &REPORTED_KS)?;
        Ok(Self {
            r1: v[0],
            r5: v[1],
            r10: v[2],
            coords,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkGrid {
    pub model_name: String,
    /// Ordered as [`CellCoords::ALL`].
    cells: [MetricsCell; 4],
}

impl BenchmarkGrid {
    /// Assemble from exactly one cell per coordinate, in any order.
    pub fn from_cells(model_name: impl Into<String>, cells: Vec<MetricsCell>) -> Result<Self, RetrievalError> {
        let model = model_name.into();
        let mut slots: [Option<MetricsCell>; 4] = [None; 4];
        for cell in cells {
            let slot = &mut slots[cell.coords.number() - 1];
            if slot.is_some() {
                return Err(RetrievalError::DuplicateCell {
                    model,
                    coords: cell.coords,
                });
            }
            *slot = Some(cell);
        }
        let mut out = Vec::with_capacity(4);
        for (slot, coords) in slots.iter().zip(CellCoords::ALL) {
            out.push(slot.ok_or_else(|| RetrievalError::MissingCell {
                model: model.clone(),
                coords,
            })?);
        }
        Ok(Self {
            model_name: model,
            cells: out.try_into().expect("four cells"),
        })
    }

    pub fn cells(&self) -> &[MetricsCell; 4] {
        &self.cells
    }

    pub fn cell(&self, coords: CellCoords) -> &MetricsCell {
        &self.cells[coords.number() - 1]
    }
}

pub fn build_grid<T: Scalar>(
    model_name: &str,
    cells: &[(CellCoords, SimilarityMatrix<T>)],
) -> Result<BenchmarkGrid, RetrievalError> {
    if let Some((_, first)) = cells.first() {
        if let Some((_, other)) = cells.iter().find(|(_, m)| m.size() != first.size()) {
            return Err(RetrievalError::DimensionMismatch {
                model: model_name.to_owned(),
                first: first.size(),
                other: other.size(),
            });
        }
    }
    let mut seen = Vec::with_capacity(cells.len());
    for (coords, _) in cells {
        if seen.contains(coords) {
            return Err(RetrievalError::DuplicateCell {
                model: model_name.to_owned(),
                coords: *coords,
            });
        }
        seen.push(*coords);
    }
    if let Some(missing) = CellCoords::ALL.into_iter().find(|c| !seen.contains(c)) {
        return Err(RetrievalError::MissingCell {
            model: model_name.to_owned(),
            coords: missing,
        });
    }
    let metrics = cells
        .iter()
        .map(|(coords, m)| MetricsCell::from_matrix(*coords, m))
        .collect::<Result<Vec<_>, _>>()?;
    BenchmarkGrid::from_cells(model_name, metrics)
}

/// Mean, in percentage points, of (improved-trained minus original-trained)
/// over both query sets and r@1/5/10.
pub fn average_difference(grid: &BenchmarkGrid) -> f64 {
    let mut total = 0.0;
    for query in [PairSet::Original, PairSet::Improved] {
        let improved = grid.cell(CellCoords::new(PairSet::Improved, query)).values();
        let original = grid.cell(CellCoords::new(PairSet::Original, query)).values();
        for (a, b) in improved.iter().zip(original) {
            total += (a - b) * 100.0;
        }
    }
    total / 6.0
}
