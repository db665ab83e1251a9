//! Value iteration `W_{q+1} = B W_q` on the state-space grid.

mod grid;
mod io;
mod operators;
mod sweep;
mod table;

use serde::{Deserialize, Serialize};

pub use grid::{memory_estimate_mb, Block, Grid, Stencil};
pub use io::{load_table, save_table, Precision, FORMAT_VERSION};
pub use operators::{op_b, op_r, op_t};
pub use sweep::{SweepMode, Sweeper};
pub use table::ValueTable;

use crate::error::Result;
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    /// Stop once the sup-norm change between two iterates is at most `tol`.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub mode: SweepMode,
    /// Constant the iteration starts from (including at the absorbing state).
    #[serde(default)]
    pub initial_value: f64,
}

fn default_tol() -> f64 {
    1e-6
}

fn default_max_iter() -> usize {
    500
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: default_tol(),
            max_iter: default_max_iter(),
            mode: SweepMode::default(),
            initial_value: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iterations: usize,
    /// Sup-norm of `W_{q+1} - W_q` for each iteration, absorbing state included.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub tolerance: f64,
    pub mode: SweepMode,
    /// Interpolation lookups clamped to the lattice during the last sweep.
    pub clamp_events: u64,
}

impl IterationReport {
    /// Geometric mean of the residual ratios over the last `window` iterations.
    pub fn decay_ratio(&self, window: usize) -> Option<f64> {
        let r = &self.residuals;
        if r.len() < window + 1 || window == 0 {
            return None;
        }
        let (a, b) = (r[r.len() - 1 - window], r[r.len() - 1]);
        (a > 0.0 && b > 0.0).then(|| (b / a).powf(1.0 / window as f64))
    }
}

fn sup_diff(a: &ValueTable, b: &ValueTable) -> f64 {
    let rows = a
        .values()
        .iter()
        .zip(b.values())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    rows.max((a.value_at_delta - b.value_at_delta).abs())
}

/// Iterate the operator from `w0` until the sup-norm change drops to `tol`
/// or `max_iter` sweeps were made. The last iterate is returned either way.
pub fn iterate(
    model: &Model,
    w0: ValueTable,
    options: &SolverOptions,
    mut progress: impl FnMut(usize, f64),
) -> Result<(ValueTable, IterationReport)> {
    let sweeper = Sweeper::new(model, w0.grid());
    let mut current = w0;
    let mut report = IterationReport {
        iterations: 0,
        residuals: Vec::new(),
        converged: false,
        tolerance: options.tol,
        mode: options.mode,
        clamp_events: 0,
    };
    while report.iterations < options.max_iter {
        current.reset_clamp_events();
        let next = sweeper.apply(&current, options.mode)?;
        let residual = sup_diff(&current, &next);
        report.clamp_events = current.clamp_events();
        report.iterations += 1;
        report.residuals.push(residual);
        progress(report.iterations, residual);
        current = next;
        if residual <= options.tol {
            report.converged = true;
            break;
        }
    }
    current.iterations = report.iterations;
    current.residual = report.residuals.last().copied().unwrap_or(f64::NAN);
    Ok((current, report))
}

/// Build the grid and iterate from the constant `options.initial_value`.
pub fn solve(
    model: &Model,
    options: &SolverOptions,
    progress: impl FnMut(usize, f64),
) -> Result<(ValueTable, IterationReport)> {
    let grid = Grid::build(model.config())?;
    let w0 = ValueTable::constant(grid, options.initial_value);
    iterate(model, w0, options, progress)
}
