//! Results tables for benchmark grids.

use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::grid::{average_difference, BenchmarkGrid, CellCoords, PairSet};

pub const ORIGINAL_LABEL: &str = "MSR-VTT";
pub const IMPROVED_LABEL: &str = "Improved";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(Self::Text),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown report format {other:?} (expected text or csv)")),
        }
    }
}

fn label(p: PairSet) -> &'static str {
    match p {
        PairSet::Original => ORIGINAL_LABEL,
        PairSet::Improved => IMPROVED_LABEL,
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

fn row_values(grid: &BenchmarkGrid, training: PairSet) -> Vec<String> {
    [PairSet::Original, PairSet::Improved]
        .into_iter()
        .flat_map(|q| grid.cell(CellCoords::new(training, q)).values())
        .map(pct)
        .collect()
}

fn sorted(grids: &[BenchmarkGrid]) -> Vec<&BenchmarkGrid> {
    let mut v: Vec<&BenchmarkGrid> = grids.iter().collect();
    v.sort_by(|a, b| a.model_name.cmp(&b.model_name));
    v
}

fn text_table(out: &mut String, grid: &BenchmarkGrid) {
    let rows: Vec<(String, Vec<String>)> = [PairSet::Original, PairSet::Improved]
        .into_iter()
        .map(|t| (format!("{} × {}", grid.model_name, label(t)), row_values(grid, t)))
        .collect();
    let w = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0).max(5);
    let group = 20;
    let original = format!("{ORIGINAL_LABEL} query");
    let _ = writeln!(out, "{:<w$} | {original:<group$} | {IMPROVED_LABEL} query", "Model");
    let _ = writeln!(out, "{:<w$} | {:>6}{:>7}{:>7} | {:>6}{:>7}{:>7}", "", "r@1", "r@5", "r@10", "r@1", "r@5", "r@10");
    let _ = writeln!(out, "{}-+-{}-+-{}", "-".repeat(w), "-".repeat(group), "-".repeat(group));
    for (l, v) in rows {
        let _ = writeln!(
            out,
            "{:<w$} | {:>6}{:>7}{:>7} | {:>6}{:>7}{:>7}",
            l, v[0], v[1], v[2], v[3], v[4], v[5]
        );
    }
}

/// Render grids sorted by model name (stable), followed by each model's
/// average difference in percentage points.
pub fn render_report(grids: &[BenchmarkGrid], format: ReportFormat) -> String {
    let grids = sorted(grids);
    let mut out = String::new();
    match format {
        ReportFormat::Text => {
            for g in &grids {
                text_table(&mut out, g);
                out.push('\n');
            }
            out.push_str("Average difference (improved minus original training, points)\n");
            let w = grids.iter().map(|g| g.model_name.chars().count()).max().unwrap_or(0);
            for g in &grids {
                let _ = writeln!(out, "{:<w$}  {:+.2}", g.model_name, average_difference(g));
            }
        }
        ReportFormat::Csv => {
            out.push_str(
                "model,trained_on,original_query_r@1,original_query_r@5,original_query_r@10,\
                 improved_query_r@1,improved_query_r@5,improved_query_r@10,average_difference\n",
            );
            for g in &grids {
                let diff = format!("{:.2}", average_difference(g));
                for t in [PairSet::Original, PairSet::Improved] {
                    let _ = writeln!(out, "{},{},{},{}", g.model_name, t, row_values(g, t).join(","), diff);
                }
            }
        }
    }
    out
}
