use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MethodId};
use crate::error::Result;
use crate::stats::mean_se;

pub const REPORT_SCHEMA: &str = "coppkit-report-1";

/// Metrics of one method at one target policy for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub method: MethodId,
    pub eps_star: f64,
    pub seed: u64,
    pub coverage: f64,
    pub coverage_se: f64,
    pub length: f64,
    pub hull_length: f64,
    pub unbounded_fraction: f64,
    pub floor_hits: u64,
    /// Per-label `(coverage, count)` for discrete outcomes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_label: Option<Vec<(Option<f64>, usize)>>,
}

/// Seed-averaged metrics with two standard errors across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: MethodId,
    pub eps_star: f64,
    pub seeds: usize,
    pub complete: bool,
    pub coverage: f64,
    pub coverage_2se: f64,
    pub length: f64,
    pub length_2se: f64,
    pub hull_length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_label_coverage: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub seed: u64,
    /// `None` when the whole seed failed.
    pub method: Option<MethodId>,
    pub eps_star: Option<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub config: ExperimentConfig,
    pub summary: Vec<SummaryRow>,
    pub rows: Vec<SeedRow>,
    pub failures: Vec<CellFailure>,
    pub warnings: Vec<String>,
}

impl Report {
    pub(crate) fn assemble(
        config: ExperimentConfig,
        rows: Vec<SeedRow>,
        failures: Vec<CellFailure>,
        warnings: Vec<String>,
    ) -> Self {
        let mut summary = Vec::new();
        for &method in &config.methods {
            for &eps in &config.eps_star {
                let cell: Vec<&SeedRow> = rows
                    .iter()
                    .filter(|r| r.method == method && r.eps_star == eps)
                    .collect();
                // every seed failed here; the failures list says why
                if cell.is_empty() {
                    continue;
                }
                let (coverage, cse) = mean_se(&cell.iter().map(|r| r.coverage).collect::<Vec<_>>());
                let (length, lse) = mean_se(&cell.iter().map(|r| r.length).collect::<Vec<_>>());
                let hull = mean_se(&cell.iter().map(|r| r.hull_length).collect::<Vec<_>>()).0;
                let per_label_coverage = cell.first().and_then(|r| r.per_label.as_ref()).map(|first| {
                    (0..first.len())
                        .map(|l| {
                            // pool hits over seeds
                            let (h, c) = cell.iter().fold((0.0, 0usize), |(h, c), r| {
                                match r.per_label.as_ref().map(|v| v[l]) {
                                    Some((Some(cov), cnt)) => (h + cov * cnt as f64, c + cnt),
                                    _ => (h, c),
                                }
                            });
                            (c > 0).then(|| h / c as f64)
                        })
                        .collect()
                });
                summary.push(SummaryRow {
                    method,
                    eps_star: eps,
                    seeds: cell.len(),
                    complete: cell.len() == config.seeds.len(),
                    coverage,
                    coverage_2se: 2.0 * cse,
                    length,
                    length_2se: 2.0 * lse,
                    hull_length: hull,
                    per_label_coverage,
                });
            }
        }
        Self {
            schema: REPORT_SCHEMA.into(),
            config,
            summary,
            rows,
            failures,
            warnings,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn cell(&self, method: MethodId, eps_star: f64) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.method == method && r.eps_star == eps_star)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Flat rows `method,eps_star,seed,coverage,length`.
    pub fn write_csv_to<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["method", "eps_star", "seed", "coverage", "length"])?;
        for r in &self.rows {
            w.write_record([
                r.method.to_string(),
                r.eps_star.to_string(),
                r.seed.to_string(),
                r.coverage.to_string(),
                r.length.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf)?;
        Ok(String::from_utf8(buf).expect("ascii"))
    }

    /// Write `<stem>.json` and `<stem>.csv` next to each other.
    pub fn write(&self, json_path: &Path) -> Result<()> {
        std::fs::write(json_path, self.to_json()?)?;
        std::fs::write(json_path.with_extension("csv"), self.to_csv()?)?;
        Ok(())
    }
}
