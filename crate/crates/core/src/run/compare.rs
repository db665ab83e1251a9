use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::McSummary;

/// One line of a protocol comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub protocol: String,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub min_cost: f64,
    pub cd4_mean: f64,
    pub days_under: f64,
    pub injections: f64,
    pub n_runs: usize,
    pub seed: u64,
}

impl ComparisonRow {
    pub fn from_summary(protocol: &str, s: &McSummary) -> Self {
        ComparisonRow {
            protocol: protocol.to_string(),
            mean_cost: s.mean_cost,
            std_cost: s.std_cost,
            min_cost: s.min_cost,
            cd4_mean: s.mean_cd4,
            days_under: s.mean_days_under,
            injections: s.mean_injections,
            n_runs: s.n_runs,
            seed: s.seed,
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::invalid(format!("comparison table: {e}"))
}

/// Comma-separated rendering with a header line. Floats are written in
/// shortest round-trip form, so [`read_comparison`] restores them exactly.
pub fn write_comparison<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("comparison table: {e}")))
}

pub fn read_comparison<R: Read>(input: R) -> Result<Vec<ComparisonRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(csv_error))
        .collect()
}

/// Aligned text rendering for the console.
pub fn pretty_comparison(rows: &[ComparisonRow]) -> String {
    let width = rows.iter().map(|r| r.protocol.len()).max().unwrap_or(0).max(8);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:>9}  {:>8}  {:>9}  {:>8}  {:>10}  {:>10}",
        "protocol", "mean cost", "std", "min cost", "CD4 mean", "days <thr", "injections"
    );
    let _ = writeln!(s, "{}", "-".repeat(width + 68));
    for r in rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>9.4}  {:>8.4}  {:>9.4}  {:>8.1}  {:>10.2}  {:>10.2}",
            r.protocol, r.mean_cost, r.std_cost, r.min_cost, r.cd4_mean, r.days_under, r.injections
        );
    }
    s
}
