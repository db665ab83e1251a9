//! Run configuration files and the solve / simulate / compare pipelines
//! behind the command-line tool.

mod compare;
mod config;

use std::fmt::Write as _;
use std::path::Path;

pub use compare::{pretty_comparison, read_comparison, write_comparison, ComparisonRow};
pub use config::{McOptions, Outputs, RunConfig};

use crate::error::Result;
use crate::model::{Model, State};
use crate::sim::{make_fixed_protocol, monte_carlo, Policy, PROTOCOL_NAMES};
use crate::solver::{load_table, solve, IterationReport, SolverOptions, ValueTable};

/// A converged (or not) value table with its report.
#[derive(Debug)]
pub struct SolveOutcome {
    pub table: ValueTable,
    pub report: IterationReport,
    /// Value at the initial state of the patient.
    pub w_x0: f64,
}

pub fn run_solve(model: &Model, options: &SolverOptions, progress: impl FnMut(usize, f64)) -> Result<SolveOutcome> {
    let (mut table, report) = solve(model, options, progress)?;
    table.config_hash = model.config_hash();
    let w_x0 = table.interpolate(&State::initial(model.params()))?;
    Ok(SolveOutcome { table, report, w_x0 })
}

/// Human-readable solve report.
pub fn solve_report(model: &Model, outcome: &SolveOutcome) -> String {
    let r = &outcome.report;
    let g = outcome.table.grid();
    let mut s = String::new();
    let _ = writeln!(s, "config_hash = {}", model.config_hash());
    let _ = writeln!(s, "grid = {} rows x {} columns", g.n_sum, g.n_pr);
    let _ = writeln!(s, "mode = {:?}", r.mode);
    let _ = writeln!(s, "tolerance = {:e}", r.tolerance);
    let _ = writeln!(s, "iterations = {}", r.iterations);
    let _ = writeln!(s, "converged = {}", r.converged);
    let _ = writeln!(s, "final_residual = {:e}", r.residuals.last().copied().unwrap_or(f64::NAN));
    let _ = writeln!(s, "clamp_events_last_sweep = {}", r.clamp_events);
    let _ = writeln!(s, "value_at_delta = {}", outcome.table.value_at_delta);
    let _ = writeln!(s, "W(x0) = {}", outcome.w_x0);
    let _ = writeln!(s, "residuals:");
    for (i, res) in r.residuals.iter().enumerate() {
        let _ = writeln!(s, "  {:4} {:e}", i + 1, res);
    }
    s
}

/// Load a value table and check it was computed for `model`.
pub fn load_table_for(model: &Model, path: &Path) -> Result<ValueTable> {
    load_table(path, model.config(), &model.config_hash())
}

/// The policy for a protocol name; `"optimal"` needs a table.
pub fn policy_for<'t>(name: &str, model: &Model, table: Option<&'t ValueTable>) -> Result<Policy<'t>> {
    match (name, table) {
        ("optimal", Some(t)) => Ok(Policy::Optimal(t)),
        ("optimal", None) => Err(crate::Error::invalid("the optimal policy needs a value table")),
        _ => make_fixed_protocol(name, model.config()),
    }
}

/// The default comparison set: the optimal policy and the four fixed protocols.
pub fn default_protocols() -> Vec<String> {
    std::iter::once("optimal")
        .chain(PROTOCOL_NAMES)
        .map(str::to_string)
        .collect()
}

/// Monte Carlo summary for each protocol, with the same seed for all.
pub fn run_compare(
    model: &Model,
    table: Option<&ValueTable>,
    protocols: &[String],
    n_runs: usize,
    seed: u64,
) -> Result<Vec<ComparisonRow>> {
    let policies = protocols
        .iter()
        .map(|p| policy_for(p, model, table))
        .collect::<Result<Vec<_>>>()?;
    protocols
        .iter()
        .zip(&policies)
        .map(|(name, policy)| {
            let summary = monte_carlo(model, policy, n_runs, seed)?;
            Ok(ComparisonRow::from_summary(name, &summary))
        })
        .collect()
}
