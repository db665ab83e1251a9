//! State-space grid: one block of `(sigma, theta)` rows per `(gamma, n)` pair,
//! times a regular `(p, r)` lattice of columns.
//!
//! Rows are stored block-major, and inside a block `theta`-major with `sigma`
//! ascending. Only reachable day counters are enumerated. In block `(gamma, n)`
//! the last injection happened at `tau = theta - sigma`, and `tau` is either
//! `1 + 7 (n - 1)` (first cycle) or at least `sigma_min` days later than the
//! last injection of the first cycle. Blocks with an active effect or an
//! unfinished cycle stop at `sigma = 7`, and the finished-cycle block with no
//! active effect stops at `sigma = sigma_min` (from there on its states only
//! differ through `theta`, see [`Grid::row_of`]). The block `(1, 1)` also
//! holds the two pre-study rows `sigma = theta` for `theta` in `{0, 1}`.

use crate::error::{Error, Result};
use crate::model::{ModelConfig, State, INJECTION_SPACING};

/// One `(gamma, n)` block of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub gamma: u32,
    pub n: u32,
    /// Largest `sigma` stored in the block.
    pub sigma_cap: u32,
    /// Whether `sigma` values above the cap are folded onto the cap.
    pub saturating: bool,
    /// Zero-based index of the first row of the block.
    pub start: usize,
    /// Number of rows of the block.
    pub len: usize,
    /// `offsets[theta]` is the in-block index of the first row at `theta`.
    offsets: Vec<usize>,
    /// `sigma` values stored at `theta`: two ascending, disjoint inclusive
    /// runs, empty when `lo > hi`.
    runs: Vec<[(u32, u32); 2]>,
}

const EMPTY_RUN: (u32, u32) = (1, 0);

fn run_len((lo, hi): (u32, u32)) -> usize {
    if lo > hi {
        0
    } else {
        (hi - lo + 1) as usize
    }
}

impl Block {
    /// `sigma` values stored at `theta`, ascending.
    pub fn sigmas(&self, theta: u32) -> impl Iterator<Item = u32> + '_ {
        self.runs
            .get(theta as usize)
            .into_iter()
            .flat_map(|runs| runs.iter().flat_map(|&(lo, hi)| lo..=hi))
    }

    /// Zero-based global row of `(sigma, theta)`, without saturation.
    #[inline]
    fn row_exact(&self, sigma: u32, theta: u32) -> Option<usize> {
        let [a, b] = *self.runs.get(theta as usize)?;
        let local = if (a.0..=a.1).contains(&sigma) {
            sigma - a.0
        } else if (b.0..=b.1).contains(&sigma) {
            run_len(a) as u32 + sigma - b.0
        } else {
            return None;
        };
        Some(self.start + self.offsets[theta as usize] + local as usize)
    }
}

/// The full grid Γ.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub blocks: Vec<Block>,
    pub n_p: usize,
    pub n_r: usize,
    pub p_min: f64,
    pub r_min: f64,
    pub h_p: f64,
    pub h_r: f64,
    /// Total number of rows.
    pub n_sum: usize,
    /// Total number of columns, `n_p * n_r`.
    pub n_pr: usize,
    pub horizon: u32,
    n_doses: usize,
    n_inj: u32,
}

/// Bytes needed for the two tables of a Jacobi sweep.
pub fn memory_estimate_mb(rows: usize, cols: usize, bytes_per_value: usize) -> f64 {
    (2 * rows * cols * bytes_per_value) as f64 / (1024.0 * 1024.0)
}

impl Grid {
    /// Enumerate the grid for `config`. Refuses when two `f64` tables would
    /// exceed the configured memory cap.
    pub fn build(config: &ModelConfig) -> Result<Grid> {
        config.validate()?;
        let grid = Self::build_unchecked(config);
        let required = memory_estimate_mb(grid.n_sum, grid.n_pr, 8);
        if required > config.grid.max_memory_mb {
            return Err(Error::GridTooLarge {
                rows: grid.n_sum,
                cols: grid.n_pr,
                required_mb: required,
                cap_mb: config.grid.max_memory_mb,
            });
        }
        Ok(grid)
    }

    fn build_unchecked(config: &ModelConfig) -> Grid {
        let n_doses = config.doses.len();
        let horizon = config.horizon;
        let mut blocks = Vec::with_capacity(n_doses * config.n_inj as usize);
        let mut start = 0;
        // last injection of the first cycle, and earliest start of a later one
        let first_end = 1 + INJECTION_SPACING * (config.n_inj - 1);
        let second_start = first_end + config.sigma_min;
        for n in 1..=config.n_inj {
            for gamma in 1..=n_doses as u32 {
                let finished_idle = gamma == 1 && n == config.n_inj;
                let sigma_cap = if finished_idle {
                    config.sigma_min
                } else {
                    INJECTION_SPACING
                };
                let tau_first = 1 + INJECTION_SPACING * (n - 1);
                let tau_later = second_start + INJECTION_SPACING * (n - 1);
                let mut offsets = Vec::with_capacity(horizon as usize + 1);
                let mut runs = Vec::with_capacity(horizon as usize + 1);
                let mut len = 0;
                for theta in 0..=horizon {
                    let r = if gamma == 1 && n == 1 && theta <= 1 {
                        // pre-study rows, plus a jump right after the first injection
                        [(0, theta), EMPTY_RUN]
                    } else {
                        // later cycles fill 0..=theta - tau_later, the first
                        // cycle adds the single diagonal theta - tau_first
                        // (no injection happens at the horizon itself)
                        let later = if theta >= tau_later {
                            (theta.saturating_sub(horizon - 1), (theta - tau_later).min(sigma_cap))
                        } else {
                            EMPTY_RUN
                        };
                        let first = match theta.checked_sub(tau_first) {
                            Some(s) if s <= sigma_cap => (s, s),
                            Some(_) if finished_idle => (sigma_cap, sigma_cap),
                            _ => EMPTY_RUN,
                        };
                        if first.0 > first.1 || (later.0 <= later.1 && (later.0..=later.1).contains(&first.0)) {
                            [later, EMPTY_RUN]
                        } else if later.0 > later.1 {
                            [first, EMPTY_RUN]
                        } else {
                            [later, first]
                        }
                    };
                    offsets.push(len);
                    runs.push(r);
                    len += run_len(r[0]) + run_len(r[1]);
                }
                blocks.push(Block {
                    gamma,
                    n,
                    sigma_cap,
                    saturating: finished_idle,
                    start,
                    len,
                    offsets,
                    runs,
                });
                start += len;
            }
        }
        let g = &config.grid;
        let (n_p, n_r) = (g.n_p(), g.n_r());
        Grid {
            blocks,
            n_p,
            n_r,
            p_min: g.p_min,
            r_min: g.r_min,
            h_p: g.h_p,
            h_r: g.h_r,
            n_sum: start,
            n_pr: n_p * n_r,
            horizon,
            n_doses,
            n_inj: config.n_inj,
        }
    }

    /// Number of `(gamma, n)` blocks.
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Zero-based block index of `(gamma, n)`.
    #[inline]
    pub fn block_index(&self, gamma: u32, n: u32) -> Option<usize> {
        if gamma == 0 || gamma as usize > self.n_doses || n == 0 || n > self.n_inj {
            return None;
        }
        Some((gamma as usize - 1) + self.n_doses * (n as usize - 1))
    }

    pub fn block(&self, gamma: u32, n: u32) -> Option<&Block> {
        self.block_index(gamma, n).map(|i| &self.blocks[i])
    }

    /// Zero-based row of the integer day counters `(gamma, n, sigma, theta)`.
    ///
    /// In the finished-cycle idle block, `sigma` above `sigma_min` is folded
    /// onto `sigma_min`: such states share their dynamics, boundary and costs.
    #[inline]
    pub fn row_of(&self, gamma: u32, n: u32, sigma: u32, theta: u32) -> Option<usize> {
        let block = &self.blocks[self.block_index(gamma, n)?];
        let sigma = if block.saturating {
            sigma.min(block.sigma_cap)
        } else {
            sigma
        };
        block.row_exact(sigma, theta)
    }

    /// The day counters `(gamma, n, sigma, theta)` of a zero-based row.
    pub fn row_state(&self, row: usize) -> Option<(u32, u32, u32, u32)> {
        if row >= self.n_sum {
            return None;
        }
        let block = self.blocks.iter().rfind(|b| b.start <= row && b.len > 0)?;
        let local = row - block.start;
        let theta = block.offsets.partition_point(|&o| o <= local) - 1;
        let k = (local - block.offsets[theta]) as u32;
        let [a, b] = block.runs[theta];
        let first = run_len(a) as u32;
        let sigma = if k < first { a.0 + k } else { b.0 + k - first };
        Some((block.gamma, block.n, sigma, theta as u32))
    }

    /// Lattice value of `p` for column index `ip` (zero-based).
    #[inline]
    pub fn p_at(&self, ip: usize) -> f64 {
        self.p_min + ip as f64 * self.h_p
    }

    #[inline]
    pub fn r_at(&self, ir: usize) -> f64 {
        self.r_min + ir as f64 * self.h_r
    }

    /// `(p, r)` of a zero-based column; `p` is the fast index.
    #[inline]
    pub fn column_pr(&self, col: usize) -> (f64, f64) {
        (self.p_at(col % self.n_p), self.r_at(col / self.n_p))
    }

    fn lattice_index(v: f64, lo: f64, h: f64, count: usize) -> Option<usize> {
        let k = (v - lo) / h;
        let kr = k.round();
        if (k - kr).abs() > 1e-9 || kr < 0.0 || kr as usize >= count {
            return None;
        }
        Some(kr as usize)
    }

    /// One-based `(v, s)` indices of a grid state. `s = 1` at `(p_min, r_min)`.
    pub fn chi(&self, x: &State) -> Result<(usize, usize)> {
        let off = || Error::invalid(format!("{x} is not a grid point"));
        let day = |v: f64| {
            let k = v.round();
            ((v - k).abs() <= 1e-9 && k >= 0.0).then_some(k as u32)
        };
        let (sigma, theta) = (day(x.sigma).ok_or_else(off)?, day(x.theta).ok_or_else(off)?);
        let block = self.block(x.gamma, x.n).ok_or_else(off)?;
        let row = block.row_exact(sigma, theta).ok_or_else(off)?;
        let ip = Self::lattice_index(x.p, self.p_min, self.h_p, self.n_p).ok_or_else(off)?;
        let ir = Self::lattice_index(x.r, self.r_min, self.h_r, self.n_r).ok_or_else(off)?;
        Ok((row + 1, ip + 1 + self.n_p * ir))
    }

    /// Inverse of [`Grid::chi`].
    pub fn chi_inverse(&self, v: usize, s: usize) -> Result<State> {
        if v == 0 || s == 0 || s > self.n_pr {
            return Err(Error::invalid(format!("(v, s) = ({v}, {s}) is out of range")));
        }
        let (gamma, n, sigma, theta) = self
            .row_state(v - 1)
            .ok_or_else(|| Error::invalid(format!("row {v} is out of range")))?;
        let (p, r) = self.column_pr(s - 1);
        Ok(State::new(gamma, n, sigma as f64, theta as f64, p, r))
    }

    /// Bilinear weights of an off-lattice `(p, r)`, clamped to the lattice.
    #[inline]
    pub fn stencil(&self, p: f64, r: f64) -> Stencil {
        let (ip, wp, cp) = axis(p, self.p_min, self.h_p, self.n_p);
        let (ir, wr, cr) = axis(r, self.r_min, self.h_r, self.n_r);
        Stencil {
            col: (ip + self.n_p * ir) as u32,
            wp,
            wr,
            clamped: cp || cr,
        }
    }
}

/// Lower lattice index, weight of the upper neighbour and whether clamping happened.
#[inline]
fn axis(v: f64, lo: f64, h: f64, count: usize) -> (usize, f64, bool) {
    let k = (v - lo) / h;
    let top = (count - 1) as f64;
    let (k, clamped) = if k < 0.0 {
        (0.0, true)
    } else if k > top {
        (top, true)
    } else if k.is_nan() {
        (0.0, true)
    } else {
        (k, false)
    };
    let i = (k.floor() as usize).min(count - 2);
    (i, k - i as f64, clamped)
}

/// Bilinear interpolation weights on the `(p, r)` lattice. `col` is the
/// zero-based column of the lower-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub col: u32,
    pub wp: f64,
    pub wr: f64,
    pub clamped: bool,
}

impl Stencil {
    /// Interpolate the row `values` (one row of a table, `n_p * n_r` entries).
    #[inline]
    pub fn eval(&self, values: &[f64], n_p: usize) -> f64 {
        let c = self.col as usize;
        let v = &values[c..c + n_p + 2];
        let (v00, v10) = (v[0], v[1]);
        let (v01, v11) = (v[n_p], v[n_p + 1]);
        let lo = v00 + self.wp * (v10 - v00);
        let hi = v01 + self.wp * (v11 - v01);
        lo + self.wr * (hi - lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GridSpec;

    fn small() -> ModelConfig {
        ModelConfig {
            horizon: 60,
            sigma_min: 21,
            grid: GridSpec {
                p_max: 40.0,
                r_max: 100.0,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn block_count_and_columns() {
        let grid = Grid::build(&ModelConfig::default()).unwrap();
        assert_eq!(grid.n_blocks(), 6);
        assert_eq!(grid.n_p, 31);
        assert_eq!(grid.n_pr, 31 * 61);
    }

    #[test]
    fn chi_corners() {
        let grid = Grid::build(&small()).unwrap();
        let x = State::new(1, 1, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(grid.chi(&x).unwrap(), (1, 1));
        let x = State::new(1, 1, 0.0, 0.0, 40.0, 100.0);
        assert_eq!(grid.chi(&x).unwrap().1, grid.n_pr);
    }

    #[test]
    fn chi_rejects_off_grid() {
        let grid = Grid::build(&small()).unwrap();
        assert!(grid.chi(&State::new(1, 1, 0.0, 0.0, 5.0, 0.0)).is_err());
        assert!(grid.chi(&State::new(2, 1, 8.0, 30.0, 0.0, 0.0)).is_err());
        assert!(grid.chi(&State::new(1, 2, 0.0, 5.0, 0.0, 0.0)).is_err());
        assert!(grid.chi(&State::new(1, 1, 0.5, 30.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn saturation_folds_large_sigma() {
        let grid = Grid::build(&small()).unwrap();
        assert_eq!(grid.row_of(1, 2, 40, 55), grid.row_of(1, 2, 21, 55));
        assert_eq!(grid.row_of(2, 2, 8, 55), None);
    }

    #[test]
    fn memory_cap_refuses() {
        let cfg = ModelConfig {
            grid: GridSpec {
                max_memory_mb: 10.0,
                ..Default::default()
            },
            ..Default::default()
        };
        match Grid::build(&cfg) {
            Err(Error::GridTooLarge { required_mb, .. }) => assert!(required_mb > 10.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stencil_clamps_and_hits_nodes() {
        let grid = Grid::build(&small()).unwrap();
        let values: Vec<f64> = (0..grid.n_pr).map(|c| c as f64).collect();
        let s = grid.stencil(20.0, 50.0);
        assert!(!s.clamped);
        assert_eq!(s.eval(&values, grid.n_p), (2 + grid.n_p * 2) as f64);
        let s = grid.stencil(40.0, 100.0);
        assert_eq!(s.eval(&values, grid.n_p), (grid.n_pr - 1) as f64);
        assert!(grid.stencil(-1.0, 10.0).clamped);
        assert!(grid.stencil(10.0, 1e6).clamped);
    }

    /// Day counters reachable from the initial state, by exhaustive search
    /// over all actions, all threshold outcomes and jumps at every day.
    fn reachable_rows(config: &ModelConfig) -> std::collections::HashSet<(u32, u32, u32, u32)> {
        let (t_h, n_inj, top) = (config.horizon, config.n_inj, config.doses.len() as u32);
        let fold = |g: u32, n: u32, s: u32| if g == 1 && n == n_inj { s.min(config.sigma_min) } else { s };
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![(1, 1, 0, 0)];
        while let Some((g, n, s, t)) = stack.pop() {
            let key = (g, n, fold(g, n, s), t);
            if !seen.insert(key) {
                continue;
            }
            let (_, _, s, _) = key;
            if t >= t_h {
                continue;
            }
            let pre = g == 1 && n == 1 && s == t && t <= 1;
            let mut next = Vec::new();
            if pre {
                if t == 1 {
                    next.extend((2..=top).map(|g2| (g2, 1, 0, 1)));
                } else {
                    next.push((1, 1, s + 1, t + 1));
                }
            } else if n < n_inj && s == 7 {
                next.extend((1..=top).map(|g2| (g2, n + 1, 0, t)));
            } else if g > 1 && n == n_inj && s == 7 {
                next.push((1, n, 7, t));
            } else {
                if g == 1 && n == n_inj && s >= config.sigma_min {
                    next.extend((2..=top).map(|g2| (g2, 1, 0, t)));
                }
                if g > 1 {
                    next.push((1, n, s, t));
                }
                next.push((g, n, s + 1, t + 1));
            }
            stack.extend(next);
        }
        seen
    }

    #[test]
    fn rows_are_exactly_the_reachable_day_counters() {
        for config in [small(), ModelConfig::default()] {
            let g = Grid::build(&config).unwrap();
            let reach = reachable_rows(&config);
            assert_eq!(g.n_sum, reach.len());
            let mut rows: Vec<usize> = reach
                .iter()
                .map(|&(gm, n, s, t)| g.row_of(gm, n, s, t).unwrap_or_else(|| panic!("({gm},{n},{s},{t}) has no row")))
                .collect();
            rows.sort_unstable();
            rows.dedup();
            assert_eq!(rows.len(), g.n_sum);
        }
    }

    #[test]
    fn chi_round_trips_over_a_whole_grid() {
        let g = Grid::build(&small()).unwrap();
        for v in 1..=g.n_sum {
            for s in 1..=g.n_pr {
                let x = g.chi_inverse(v, s).unwrap();
                assert_eq!(g.chi(&x).unwrap(), (v, s));
            }
        }
        assert!(g.chi_inverse(g.n_sum + 1, 1).is_err());
        assert!(g.chi_inverse(1, g.n_pr + 1).is_err());
    }

    #[test]
    fn bilinear_reproduces_affine_functions() {
        use crate::solver::ValueTable;
        use rand::{Rng, SeedableRng};
        let g = Grid::build(&small()).unwrap();
        let f = |p: f64, r: f64| 3.5 - 0.25 * p + 0.0125 * r;
        let t = ValueTable::from_fn(g.clone(), 0.0, |x| f(x.p, x.r));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let row = rng.random_range(0..g.n_sum);
            let (gamma, n, sigma, theta) = g.row_state(row).unwrap();
            let p = rng.random_range(0.0..40.0);
            let r = rng.random_range(0.0..100.0);
            let x = State::new(gamma, n, sigma as f64, theta as f64, p, r);
            let v = t.interpolate(&x).unwrap();
            assert!((v - f(p, r)).abs() <= 1e-12, "{x}: {v} vs {}", f(p, r));
        }
    }
}
