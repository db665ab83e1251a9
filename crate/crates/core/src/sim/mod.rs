//! Policies, controlled trajectories and Monte Carlo evaluation.

mod export;
mod policy;
mod trajectory;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use export::write_trajectory;
pub use policy::{make_fixed_protocol, optimal_action, Policy, Protocol, PROTOCOL_NAMES};
pub use trajectory::{
    discounted_cost, replicate_rng, simulate_from, simulate_trajectory, Event, EventKind, PathSample, TrajectoryRecord,
};

use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n_runs: usize,
    pub mean_cost: f64,
    /// Sample standard deviation of the per-run cost (0 for a single run).
    pub std_cost: f64,
    pub min_cost: f64,
    pub mean_cd4: f64,
    pub mean_days_under: f64,
    pub mean_injections: f64,
    pub seed: u64,
}

impl McSummary {
    /// Standard error of the mean cost.
    pub fn std_error(&self) -> f64 {
        self.std_cost / (self.n_runs as f64).sqrt()
    }
}

/// Pairwise (cascade) summation.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn mean(v: &[f64]) -> f64 {
    pairwise_sum(v) / v.len() as f64
}

/// Run `n_runs` independent replicates (replicate `i` uses stream `i` of
/// `seed`) and aggregate costs and clinical criteria.
pub fn monte_carlo(model: &Model, policy: &Policy, n_runs: usize, seed: u64) -> Result<McSummary> {
    if n_runs == 0 {
        return Err(Error::invalid("n_runs must be at least 1"));
    }
    let runs: Vec<[f64; 4]> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let traj = simulate_trajectory(model, policy, &mut replicate_rng(seed, i))?;
            Ok([
                traj.discounted_cost,
                traj.cd4_mean,
                traj.days_under_threshold,
                traj.injections as f64,
            ])
        })
        .collect::<Result<_>>()?;
    let column = |j: usize| runs.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let costs = column(0);
    let mean_cost = mean(&costs);
    let std_cost = if n_runs > 1 {
        let sq: Vec<f64> = costs.iter().map(|c| (c - mean_cost).powi(2)).collect();
        (pairwise_sum(&sq) / (n_runs - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(McSummary {
        n_runs,
        mean_cost,
        std_cost,
        min_cost: costs.iter().copied().fold(f64::INFINITY, f64::min),
        mean_cd4: mean(&column(1)),
        mean_days_under: mean(&column(2)),
        mean_injections: mean(&column(3)),
        seed,
    })
}
