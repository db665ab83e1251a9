//! Whole-table applications of the dynamic-programming operator.
//!
//! Flow positions only depend on the block and the starting lattice point, so
//! the interpolation stencils of `φ(y, k dt)` are computed once and shared by
//! every row of the block.
//!
//! Two evaluation paths are provided:
//!
//! - [`SweepMode::Direct`] evaluates the quadrature along the whole flow line
//!   of each grid point, up to its boundary hit. Its cost grows with the
//!   distance to the boundary.
//! - [`SweepMode::FlowLine`] accumulates the same sum one day at a time,
//!   backward in `theta`: the value at `y` is the first day's contribution
//!   plus the discounted, interpolated new value at `φ(y, 1)`. One sweep is
//!   linear in the grid size, but interpolating the partial sums off the
//!   lattice adds an error per day that the direct path does not have.

use rayon::prelude::*;

use super::grid::{Grid, Stencil};
use super::operators::op_b;
use super::table::ValueTable;
use crate::error::Result;
use crate::model::{Affine2, BoundaryId, Model, State, INJECTION_SPACING, UNDER_THRESHOLD_COST_RATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    #[default]
    Direct,
    FlowLine,
}

/// Rows evaluated side by side in a direct sweep.
const DIRECT_BATCH: usize = 8;

#[derive(Debug, Clone, Copy)]
struct Node {
    st: Stencil,
    under: bool,
}

struct BlockPaths {
    /// Nodes per lattice point (`days * steps_per_day + 1`).
    len: usize,
    /// Node `k` of column `col` at `k * n_pr + col`.
    nodes: Vec<Node>,
    /// For the saturating block: `next_under[j * n_pr + col]` is the first
    /// day `>= j` at which the flow from `col` is at or below the threshold
    /// (`u16::MAX` if never within the horizon).
    next_under: Vec<u16>,
}

/// Precomputed flow stencils for one model and grid.
pub struct Sweeper<'m> {
    model: &'m Model,
    grid: Grid,
    spd: usize,
    dt: f64,
    /// `e^{-(rate + α) k dt}` for the idle block (index 0) and the others.
    disc: [Vec<f64>; 2],
    paths: Vec<BlockPaths>,
}

/// Where the flow from a grid point stops and after how many whole days.
#[derive(Debug, Clone, Copy)]
struct Stop {
    days: u32,
    boundary: BoundaryId,
}

/// Per-row data shared by both evaluation paths.
struct RowSetup<'a> {
    block: usize,
    rate: f64,
    disc: &'a [f64],
    n: u32,
    sigma: u32,
    theta: u32,
    path: &'a BlockPaths,
    reset: Vec<usize>,
    stops: Vec<Stop>,
}

impl<'m> Sweeper<'m> {
    pub fn new(model: &'m Model, grid: &Grid) -> Self {
        let cfg = model.config();
        let spd = cfg.steps_per_day();
        let dt = 1.0 / spd as f64;
        let horizon = cfg.horizon as usize;
        let n_pr = grid.n_pr;
        let disc = [1, 2].map(|gamma| {
            let c = cfg.jump_rate(gamma) + cfg.alpha;
            (0..=horizon * spd).map(|k| (-c * k as f64 * dt).exp()).collect()
        });
        let paths = grid
            .blocks
            .iter()
            .map(|b| {
                let days = if b.saturating { horizon } else { INJECTION_SPACING as usize };
                let len = days * spd + 1;
                let flow = model.linear_flow(b.gamma, b.n);
                let mut nodes = Vec::with_capacity(len * n_pr);
                for k in 0..len {
                    let prop: Affine2 = flow.propagator(k as f64 * dt);
                    for col in 0..n_pr {
                        let (p0, r0) = grid.column_pr(col);
                        let (p, r) = if k == 0 { (p0, r0) } else { prop.apply(p0, r0) };
                        nodes.push(Node {
                            st: grid.stencil(p, r),
                            under: p + r <= cfg.threshold,
                        });
                    }
                }
                let mut next_under = Vec::new();
                if b.saturating {
                    next_under = vec![u16::MAX; (days + 1) * n_pr];
                    for j in (0..=days).rev() {
                        for col in 0..n_pr {
                            next_under[j * n_pr + col] = if nodes[j * spd * n_pr + col].under {
                                j as u16
                            } else if j < days {
                                next_under[(j + 1) * n_pr + col]
                            } else {
                                u16::MAX
                            };
                        }
                    }
                }
                BlockPaths { len, nodes, next_under }
            })
            .collect();
        Sweeper {
            model,
            grid: grid.clone(),
            spd,
            dt,
            disc,
            paths,
        }
    }

    /// Apply the operator to every grid point and to the absorbing state.
    pub fn apply(&self, table: &ValueTable, mode: SweepMode) -> Result<ValueTable> {
        let g = &self.grid;
        let n_pr = g.n_pr;
        let mut values = vec![0.0; g.n_sum * n_pr];
        match mode {
            SweepMode::Direct => {
                let mut chunks = Vec::new();
                let mut rest = values.as_mut_slice();
                for rows in self.direct_batches(DIRECT_BATCH) {
                    let (head, tail) = rest.split_at_mut(rows.len() * n_pr);
                    chunks.push((rows, head));
                    rest = tail;
                }
                chunks
                    .into_par_iter()
                    .try_for_each(|(rows, out)| self.direct_rows(table, rows, out))?;
            }
            SweepMode::FlowLine => {
                let mut scratch = Vec::new();
                for theta in (0..=g.horizon).rev() {
                    let rows: Vec<usize> = g
                        .blocks
                        .iter()
                        .flat_map(|b| b.sigmas(theta).map(move |sigma| g.row_of(b.gamma, b.n, sigma, theta).unwrap()))
                        .collect();
                    scratch.resize(rows.len() * n_pr, 0.0);
                    let done: &[f64] = &values;
                    scratch
                        .par_chunks_mut(n_pr)
                        .zip(rows.par_iter())
                        .try_for_each(|(out, &row)| self.flow_line_row(table, done, row, out))?;
                    for (i, &row) in rows.iter().enumerate() {
                        values[row * n_pr..(row + 1) * n_pr].copy_from_slice(&scratch[i * n_pr..(i + 1) * n_pr]);
                    }
                }
            }
        }
        let cfg = self.model.config();
        let delta = cfg.k() / (cfg.k() + cfg.alpha) * table.value_at_delta;
        ValueTable::from_values(g.clone(), values, delta)
    }

    /// Rows outside the regular structure (the pre-study rows) go through the
    /// pointwise operator.
    fn generic_row(&self, table: &ValueTable, row: usize, out: &mut [f64]) -> Result<()> {
        let (gamma, n, sigma, theta) = self.grid.row_state(row).expect("row in range");
        for (col, v) in out.iter_mut().enumerate() {
            let (p, r) = self.grid.column_pr(col);
            let y = State::new(gamma, n, sigma as f64, theta as f64, p, r);
            *v = op_b(self.model, table, &y)?;
        }
        Ok(())
    }

    /// `None` for the pre-study rows.
    fn setup(&self, row: usize, reset_days: impl Fn(u32) -> u32) -> Option<RowSetup<'_>> {
        let (gamma, n, sigma, theta) = self.grid.row_state(row).expect("row in range");
        if gamma == 1 && n == 1 && theta <= 1 && sigma == theta {
            return None;
        }
        let cfg = self.model.config();
        let block = self.grid.block_index(gamma, n).expect("block exists");
        let b = &self.grid.blocks[block];
        let path = &self.paths[block];
        let to_end = cfg.horizon - theta;
        let n_pr = self.grid.n_pr;
        let (max_days, stops) = if !b.saturating {
            let to_spacing = INJECTION_SPACING - sigma;
            let stop = if to_end <= to_spacing {
                Stop { days: to_end, boundary: BoundaryId::Xi2 }
            } else if b.n < cfg.n_inj {
                Stop { days: to_spacing, boundary: BoundaryId::Xi3 }
            } else {
                Stop { days: to_spacing, boundary: BoundaryId::Xi5 }
            };
            (stop.days, vec![stop; n_pr])
        } else {
            let first = cfg.sigma_min.saturating_sub(sigma) as usize;
            let stops: Vec<Stop> = (0..n_pr)
                .map(|col| {
                    let hit = if first < path.len { path.next_under[first * n_pr + col] as u32 } else { u32::MAX };
                    if hit < to_end {
                        Stop { days: hit, boundary: BoundaryId::Xi4 }
                    } else {
                        Stop { days: to_end, boundary: BoundaryId::Xi2 }
                    }
                })
                .collect();
            (stops.iter().map(|s| s.days).max().unwrap_or(0), stops)
        };
        let reset = (0..=reset_days(max_days))
            .map(|j| {
                self.grid
                    .row_of(1, n, sigma + j, theta + j)
                    .expect("the reset row exists for every reachable node")
            })
            .collect();
        Some(RowSetup {
            block,
            rate: cfg.jump_rate(gamma),
            disc: &self.disc[(gamma > 1) as usize],
            n,
            sigma,
            theta,
            path,
            reset,
            stops,
        })
    }

    #[inline]
    fn node<'p>(&self, path: &'p BlockPaths, k: usize, col: usize) -> &'p Node {
        &path.nodes[k * self.grid.n_pr + col]
    }

    /// Boundary value at the end of a flow line.
    fn terminal(&self, table: &ValueTable, n: u32, sigma: u32, theta: u32, stop: Stop, st: &Stencil) -> f64 {
        let model = self.model;
        let g = &self.grid;
        let at = |gm: u32, nn: u32, s: u32| {
            let row = g.row_of(gm, nn, s, theta).expect("post-jump row exists");
            table.eval_row(row, st)
        };
        match stop.boundary {
            BoundaryId::Xi2 => table.value_at_delta,
            BoundaryId::Xi5 => at(1, n, sigma),
            BoundaryId::Xi3 => model
                .admissible_gammas(BoundaryId::Xi3)
                .map(|gm| model.impulse_cost_at(BoundaryId::Xi3, gm) + at(gm, n + 1, 0))
                .fold(f64::INFINITY, f64::min),
            BoundaryId::Xi4 => model
                .admissible_gammas(BoundaryId::Xi4)
                .map(|gm| model.impulse_cost_at(BoundaryId::Xi4, gm) + at(gm, 1, 0))
                .fold(f64::INFINITY, f64::min),
            BoundaryId::Xi1 | BoundaryId::Interior => unreachable!("regular rows never stop at {}", stop.boundary),
        }
    }

    /// `e^{-ck} (C^g + rate V(reset))` at node `k` of column `col`.
    #[inline]
    fn integrand(&self, table: &ValueTable, s: &RowSetup, k: usize, col: usize) -> f64 {
        let node = self.node(s.path, k, col);
        let cg = if node.under { UNDER_THRESHOLD_COST_RATE } else { 0.0 };
        if s.rate == 0.0 {
            return s.disc[k] * cg;
        }
        let n_p = self.grid.n_p;
        let (j, f) = (k / self.spd, k % self.spd);
        let mut v = node.st.eval(table.row(s.reset[j]), n_p);
        if f != 0 {
            let v1 = node.st.eval(table.row(s.reset[j + 1]), n_p);
            v += f as f64 * self.dt * (v1 - v);
        }
        s.disc[k] * (cg + s.rate * v)
    }

    /// Add the integrand at node `k` to `acc[col]` for every column whose
    /// flow line reaches node `k` (`k <= last[col]`, `last[col] > 0`).
    #[inline]
    fn accumulate(&self, table: &ValueTable, s: &RowSetup, k: usize, last: &[usize], acc: &mut [f64]) {
        if k % self.spd != 0 || s.rate == 0.0 {
            for (col, a) in acc.iter_mut().enumerate() {
                if k <= last[col] {
                    *a += self.integrand(table, s, k, col);
                }
            }
            return;
        }
        let n_p = self.grid.n_p;
        let n_pr = self.grid.n_pr;
        let row = table.row(s.reset[k / self.spd]);
        let nodes = &s.path.nodes[k * n_pr..(k + 1) * n_pr];
        let (scale, kk) = (s.disc[k], s.rate);
        for ((node, a), &l) in nodes.iter().zip(acc.iter_mut()).zip(last) {
            if k <= l && l > 0 {
                let cg = if node.under { UNDER_THRESHOLD_COST_RATE } else { 0.0 };
                *a += scale * (cg + kk * node.st.eval(row, n_p));
            }
        }
    }

    /// Direct evaluation of `rows`, consecutive rows of one block at one
    /// `theta`. Their reset rows are adjacent too, so running the rows side
    /// by side keeps the shared node stream and the value rows in cache.
    fn direct_rows(&self, table: &ValueTable, rows: std::ops::Range<usize>, out: &mut [f64]) -> Result<()> {
        let n_pr = self.grid.n_pr;
        let mut setups = Vec::with_capacity(rows.len());
        for (row, out) in rows.clone().zip(out.chunks_mut(n_pr)) {
            match self.setup(row, |d| d) {
                Some(s) => setups.push(s),
                None => self.generic_row(table, row, out)?,
            }
        }
        if setups.is_empty() {
            return Ok(());
        }
        let lasts: Vec<Vec<usize>> = setups
            .iter()
            .map(|s| s.stops.iter().map(|st| st.days as usize * self.spd).collect())
            .collect();
        let max_lasts: Vec<usize> = lasts.iter().map(|l| l.iter().copied().max().unwrap_or(0)).collect();
        let mut accs = vec![vec![0.0; n_pr]; setups.len()];
        for k in 0..=max_lasts.iter().copied().max().unwrap_or(0) {
            for (i, s) in setups.iter().enumerate() {
                if k <= max_lasts[i] {
                    self.accumulate(table, s, k, &lasts[i], &mut accs[i]);
                }
            }
        }
        // the sums above give every node full weight: halve both endpoints
        let half = 0.5 * self.dt;
        let mut clamps = 0u64;
        for (((s, acc), last), out) in setups.iter().zip(&accs).zip(&lasts).zip(out.chunks_mut(n_pr)) {
            for (col, v) in out.iter_mut().enumerate() {
                let stop = s.stops[col];
                let l = last[col];
                let g = if l == 0 {
                    0.0
                } else {
                    self.dt * acc[col] - half * (self.integrand(table, s, 0, col) + self.integrand(table, s, l, col))
                };
                let end = &self.node(s.path, l, col).st;
                clamps += end.clamped as u64;
                let tv = self.terminal(table, s.n, s.sigma + stop.days, s.theta + stop.days, stop, end);
                *v = g + s.disc[l] * tv;
            }
        }
        table.add_clamp_events(clamps);
        Ok(())
    }

    /// Runs of consecutive rows sharing block and `theta`, at most
    /// `max_len` long. Pre-study rows come alone.
    fn direct_batches(&self, max_len: usize) -> Vec<std::ops::Range<usize>> {
        let g = &self.grid;
        let mut out = Vec::new();
        let mut start = 0;
        let key = |row: usize| {
            let (gamma, n, sigma, theta) = g.row_state(row).expect("row in range");
            let pre = gamma == 1 && n == 1 && theta <= 1 && sigma == theta;
            (gamma, n, theta, pre)
        };
        for row in 1..=g.n_sum {
            if row == g.n_sum || row - start >= max_len || key(row) != key(start) || key(row).3 {
                out.push(start..row);
                start = row;
            }
        }
        out
    }

    fn flow_line_row(&self, table: &ValueTable, done: &[f64], row: usize, out: &mut [f64]) -> Result<()> {
        let Some(s) = self.setup(row, |d| d.min(1)) else {
            return self.generic_row(table, row, out);
        };
        let n_pr = self.grid.n_pr;
        let b = &self.grid.blocks[s.block];
        let last: Vec<usize> = s.stops.iter().map(|st| if st.days > 0 { self.spd } else { 0 }).collect();
        let mut acc = vec![0.0; n_pr];
        if last.iter().any(|&l| l > 0) {
            for k in 0..=self.spd {
                self.accumulate(table, &s, k, &last, &mut acc);
            }
        }
        let half = 0.5 * self.dt;
        for (col, a) in acc.iter_mut().enumerate() {
            if last[col] > 0 {
                *a = self.dt * *a - half * (self.integrand(table, &s, 0, col) + self.integrand(table, &s, self.spd, col));
            }
        }
        let n_p = self.grid.n_p;
        let mut clamps = 0u64;
        for (col, v) in out.iter_mut().enumerate() {
            let stop = s.stops[col];
            if stop.days == 0 {
                let st = &self.node(s.path, 0, col).st;
                *v = self.terminal(table, s.n, s.sigma, s.theta, stop, st);
                continue;
            }
            let next = self
                .grid
                .row_of(b.gamma, b.n, s.sigma + 1, s.theta + 1)
                .expect("the next row on the flow line exists");
            let st = &self.node(s.path, self.spd, col).st;
            clamps += st.clamped as u64;
            let tail = st.eval(&done[next * n_pr..(next + 1) * n_pr], n_p);
            *v = acc[col] + s.disc[self.spd] * tail;
        }
        table.add_clamp_events(clamps);
        Ok(())
    }
}
