use std::sync::atomic::{AtomicU64, Ordering};

use super::grid::{Grid, Stencil};
use crate::error::{Error, Result};
use crate::model::State;

/// Values of a function on the grid, plus its value at the absorbing state.
#[derive(Debug)]
pub struct ValueTable {
    pub(crate) grid: Grid,
    /// Row-major `n_sum x n_pr` values.
    pub(crate) values: Vec<f64>,
    pub value_at_delta: f64,
    pub config_hash: String,
    pub iterations: usize,
    pub residual: f64,
    clamp_events: AtomicU64,
}

impl Clone for ValueTable {
    fn clone(&self) -> Self {
        ValueTable {
            grid: self.grid.clone(),
            values: self.values.clone(),
            value_at_delta: self.value_at_delta,
            config_hash: self.config_hash.clone(),
            iterations: self.iterations,
            residual: self.residual,
            clamp_events: AtomicU64::new(self.clamp_events()),
        }
    }
}

impl ValueTable {
    /// A table filled with `value` everywhere, including at the absorbing state.
    pub fn constant(grid: Grid, value: f64) -> Self {
        let len = grid.n_sum * grid.n_pr;
        Self::from_values(grid, vec![value; len], value)
            .expect("length matches the grid by construction")
    }

    pub fn from_values(grid: Grid, values: Vec<f64>, value_at_delta: f64) -> Result<Self> {
        if values.len() != grid.n_sum * grid.n_pr {
            return Err(Error::invalid(format!(
                "table needs {} values, got {}",
                grid.n_sum * grid.n_pr,
                values.len()
            )));
        }
        Ok(ValueTable {
            grid,
            values,
            value_at_delta,
            config_hash: String::new(),
            iterations: 0,
            residual: f64::NAN,
            clamp_events: AtomicU64::new(0),
        })
    }

    /// Fill with a function of the grid state.
    pub fn from_fn(grid: Grid, value_at_delta: f64, f: impl Fn(&State) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_sum * grid.n_pr);
        for row in 0..grid.n_sum {
            let (gamma, n, sigma, theta) = grid.row_state(row).expect("row in range");
            for col in 0..grid.n_pr {
                let (p, r) = grid.column_pr(col);
                values.push(f(&State::new(gamma, n, sigma as f64, theta as f64, p, r)));
            }
        }
        Self::from_values(grid, values, value_at_delta).expect("sized from the grid")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.grid.n_pr;
        &self.values[row * n..(row + 1) * n]
    }

    /// Value at a grid point given by its one-based `(v, s)` indices.
    pub fn at(&self, v: usize, s: usize) -> f64 {
        self.values[(v - 1) * self.grid.n_pr + (s - 1)]
    }

    /// Number of lookups whose `(p, r)` fell outside the lattice and was clamped.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events.load(Ordering::Relaxed)
    }

    pub fn reset_clamp_events(&self) {
        self.clamp_events.store(0, Ordering::Relaxed);
    }

    pub(crate) fn add_clamp_events(&self, count: u64) {
        if count > 0 {
            self.clamp_events.fetch_add(count, Ordering::Relaxed);
        }
    }

    #[inline]
    pub(crate) fn note_clamp(&self, stencil: &Stencil) {
        if stencil.clamped {
            self.clamp_events.fetch_add(1, Ordering::Relaxed);
        }
    }

    /// Interpolated value on a row with precomputed weights.
    #[inline]
    pub(crate) fn eval_row(&self, row: usize, stencil: &Stencil) -> f64 {
        stencil.eval(self.row(row), self.grid.n_p)
    }

    /// Interpolated value at integer day counters, clamping `(p, r)`.
    #[inline]
    pub(crate) fn eval_days(&self, gamma: u32, n: u32, sigma: u32, theta: u32, st: &Stencil) -> Option<f64> {
        let row = self.grid.row_of(gamma, n, sigma, theta)?;
        Some(self.eval_row(row, st))
    }

    /// Value at an arbitrary state: bilinear in `(p, r)` inside a row and
    /// linear along the day diagonal when `sigma` and `theta` are fractional.
    ///
    /// Fails if the day counters do not correspond to grid rows.
    pub fn interpolate(&self, x: &State) -> Result<f64> {
        if x.is_delta() {
            return Ok(self.value_at_delta);
        }
        let st = self.grid.stencil(x.p, x.r);
        self.note_clamp(&st);
        let lo = x.theta.floor();
        let frac = x.theta - lo;
        let missing = || Error::invalid(format!("no grid row for the day counters of {x}"));
        let day = |v: f64| -> Option<u32> { (v >= -1e-9).then(|| v.round().max(0.0) as u32) };
        if frac <= 1e-9 || frac >= 1.0 - 1e-9 {
            let (s, t) = (day(x.sigma).ok_or_else(missing)?, day(x.theta).ok_or_else(missing)?);
            return self.eval_days(x.gamma, x.n, s, t, &st).ok_or_else(missing);
        }
        // sigma and theta share their fractional part away from the pre-study
        // rows; walk along the diagonal between the surrounding day marks
        let s_lo = day(x.sigma - frac).ok_or_else(missing)?;
        let t_lo = lo as u32;
        let a = self.eval_days(x.gamma, x.n, s_lo, t_lo, &st).ok_or_else(missing)?;
        let b = self.eval_days(x.gamma, x.n, s_lo + 1, t_lo + 1, &st).ok_or_else(missing)?;
        Ok(a + frac * (b - a))
    }
}
