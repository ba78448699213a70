//! Comparison tables and plot-ready CSV.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::experiment::{RunReport, Summary};
use crate::{BenchError, Result};

/// `(baseline - candidate) / baseline`, in percent.
pub fn reduction_pct(candidate: f64, baseline: f64) -> f64 {
    100.0 * (baseline - candidate) / baseline
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub baseline: String,
    pub baseline_avg: f64,
    pub candidate_avg: f64,
    /// Across seeds.
    pub reduction_pct: Summary,
    pub per_seed_pct: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub candidate: String,
    pub rows: Vec<ComparisonRow>,
}

impl std::fmt::Display for Comparison {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<12} {:>10} {:>10} {:>18}", "baseline", "baseline", self.candidate, "reduction %")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<12} {:>10.3} {:>10.3} {:>8.2} ± {:<7.2}",
                r.baseline, r.baseline_avg, r.candidate_avg, r.reduction_pct.mean, r.reduction_pct.std
            )?;
        }
        Ok(())
    }
}

fn same_setting(a: &RunReport, b: &RunReport) -> bool {
    a.epsilon.to_bits() == b.epsilon.to_bits()
        && a.p.to_bits() == b.p.to_bits()
        && a.seeds.iter().map(|s| s.seed).eq(b.seeds.iter().map(|s| s.seed))
}

/// Per-seed reduction of the candidate's average selected cells against
/// each baseline. Reports must share epsilon, p and seeds.
pub fn compare(candidate: &RunReport, baselines: &[&RunReport]) -> Result<Comparison> {
    if baselines.is_empty() {
        return Err(BenchError::Config("compare needs at least one baseline".into()));
    }
    let mut rows = Vec::new();
    for b in baselines {
        if !same_setting(candidate, b) {
            return Err(BenchError::Config(format!(
                "reports '{}' and '{}' differ in epsilon, p or seeds",
                candidate.policy, b.policy
            )));
        }
        let per_seed: Vec<f64> = candidate
            .seeds
            .iter()
            .zip(&b.seeds)
            .map(|(c, bs)| reduction_pct(c.avg_selected_cells, bs.avg_selected_cells))
            .collect();
        rows.push(ComparisonRow {
            baseline: b.policy.clone(),
            baseline_avg: b.avg_selected_cells.mean,
            candidate_avg: candidate.avg_selected_cells.mean,
            reduction_pct: Summary::of(&per_seed),
            per_seed_pct: per_seed,
        });
    }
    Ok(Comparison {
        candidate: candidate.policy.clone(),
        rows,
    })
}

/// One row of the tidy plot file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub policy: String,
    pub p: f64,
    pub seed: u64,
    pub avg_cells: f64,
    pub satisfaction: f64,
}

pub const PLOT_HEADER: &str = "policy,p,seed,avg_cells,satisfaction";

pub fn plot_rows(reports: &[RunReport]) -> Vec<PlotRow> {
    reports
        .iter()
        .flat_map(|r| {
            r.seeds.iter().map(move |s| PlotRow {
                policy: r.policy.clone(),
                p: r.p,
                seed: s.seed,
                avg_cells: s.avg_selected_cells,
                satisfaction: s.quality_satisfaction_rate,
            })
        })
        .collect()
}

/// Writes one row per (report, seed) under [`PLOT_HEADER`].
pub fn emit_plotdata(reports: &[RunReport], path: &Path) -> Result<usize> {
    let rows = plot_rows(reports);
    let mut w = csv::Writer::from_path(path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows.len())
}

pub fn read_plotdata(path: &Path) -> Result<Vec<PlotRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != PLOT_HEADER {
        return Err(BenchError::Serde(format!("unexpected plot header '{header}'")));
    }
    let mut rows = Vec::new();
    for r in rdr.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}
