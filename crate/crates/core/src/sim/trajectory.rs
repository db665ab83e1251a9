use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use super::policy::Policy;
use crate::error::{Error, Result};
use crate::model::{BoundaryId, Model, State};

/// Generator of replicate `replicate` for `seed`: every replicate has its own
/// stream, so results do not depend on how replicates are scheduled.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EventKind {
    /// A decision on Xi1, Xi3 or Xi4. Dose 0 (only possible on Xi3) skips
    /// the injection.
    Injection { boundary: BoundaryId, dose: f64 },
    SpontaneousJump,
    /// A forced jump without decision (Xi5).
    BoundaryHit(BoundaryId),
    Horizon,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Injection { boundary, dose } => write!(f, "injection:{dose}@{boundary}"),
            EventKind::SpontaneousJump => f.write_str("spontaneous_jump"),
            EventKind::BoundaryHit(b) => write!(f, "boundary:{b}"),
            EventKind::Horizon => f.write_str("horizon"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub theta: f64,
    pub kind: EventKind,
    /// State just before the jump.
    pub state: State,
    /// Impulse cost charged (undiscounted).
    pub cost: f64,
}

/// State at a quadrature node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathSample {
    pub theta: f64,
    pub p: f64,
    pub r: f64,
    pub gamma: u32,
    pub n: u32,
    pub sigma: f64,
    /// Gradual cost rate at this node.
    pub cost_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub events: Vec<Event>,
    /// Samples at every quadrature node `0, dt, ..., T_h`.
    pub path: Vec<PathSample>,
    pub dt: f64,
    pub discounted_cost: f64,
    pub injections: usize,
    /// Trapezoidal time spent at or below the threshold after study start.
    pub days_under_threshold: f64,
    /// Mean of `p + r` over the integer days `1..=T_h`.
    pub cd4_mean: f64,
}

impl TrajectoryRecord {
    /// Positive doses of each cycle, in order.
    pub fn cycles(&self) -> Vec<Vec<f64>> {
        let mut cycles: Vec<Vec<f64>> = Vec::new();
        for e in &self.events {
            if let EventKind::Injection { boundary, dose } = e.kind {
                match boundary {
                    BoundaryId::Xi1 | BoundaryId::Xi4 => cycles.push(vec![dose]),
                    _ if dose > 0.0 => cycles.last_mut().expect("cycle started").push(dose),
                    _ => {}
                }
            }
        }
        cycles
    }

    /// Duration of each injection's effect, from the injection to the end of
    /// the effect (spontaneous or forced). Effects still running at the
    /// horizon are left out.
    pub fn effect_durations(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut start: Option<f64> = None;
        for e in &self.events {
            let ends = match e.kind {
                EventKind::SpontaneousJump | EventKind::BoundaryHit(BoundaryId::Xi5) => true,
                EventKind::Injection { .. } => true,
                _ => false,
            };
            if ends {
                if let Some(s) = start.take() {
                    out.push(e.theta - s);
                }
            }
            if let EventKind::Injection { dose, .. } = e.kind {
                if dose > 0.0 {
                    start = Some(e.theta);
                }
            }
        }
        out
    }
}

/// Trapezoid weight of node `k` out of `last`.
fn node_weight(k: usize, last: usize, dt: f64) -> f64 {
    if k == 0 || k == last {
        0.5 * dt
    } else {
        dt
    }
}

/// Discounted cost of a recorded trajectory at discount rate `alpha`:
/// impulse costs discounted at their jump times plus the trapezoidal
/// integral of the discounted gradual cost over the sample nodes.
pub fn discounted_cost(traj: &TrajectoryRecord, alpha: f64) -> f64 {
    let impulses: f64 = traj
        .events
        .iter()
        .map(|e| (-alpha * e.theta).exp() * e.cost)
        .sum();
    let last = traj.path.len().saturating_sub(1);
    let gradual: f64 = traj
        .path
        .iter()
        .enumerate()
        .map(|(k, s)| node_weight(k, last, traj.dt) * (-alpha * s.theta).exp() * s.cost_rate)
        .sum();
    impulses + gradual
}

/// Snap day counters that are within rounding of a day mark.
fn snap(x: &mut State) {
    for v in [&mut x.sigma, &mut x.theta] {
        let r = v.round();
        if (*v - r).abs() <= 1e-7 {
            *v = r;
        }
    }
}

/// Simulate the controlled process from the initial state until the horizon.
pub fn simulate_trajectory<R: Rng>(model: &Model, policy: &Policy, rng: &mut R) -> Result<TrajectoryRecord> {
    simulate_from(model, policy, State::initial(model.params()), 0, rng)
}

/// Simulate from `start`, which must lie on a quadrature node, with `cycle`
/// cycles already started. An effect active at `start` gets a fresh
/// exponential duration (the hazard is memoryless). Costs are discounted to
/// time 0, so the expected cost from `start` is `exp(alpha * theta)` times
/// the returned one.
pub fn simulate_from<R: Rng>(
    model: &Model,
    policy: &Policy,
    start: State,
    cycle: usize,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    let cfg = model.config();
    let spd = cfg.steps_per_day();
    let dt = 1.0 / spd as f64;
    let last_node = cfg.horizon as usize * spd;
    let first_node = (start.theta * spd as f64).round();
    if start.is_delta() || (start.theta * spd as f64 - first_node).abs() > 1e-9 || start.theta > model.horizon() {
        return Err(Error::invalid(format!("cannot simulate from {start}: not a live state on a quadrature node")));
    }
    let duration = if cfg.eta > 0.0 {
        Some(Exp::new(cfg.eta).map_err(|e| Error::Config(format!("eta: {e}")))?)
    } else {
        None
    };

    let mut x = start;
    let mut events = Vec::new();
    let mut next_node = first_node as usize;
    let mut path = Vec::with_capacity(last_node + 1 - next_node);
    let mut cycle = cycle;
    let mut effect_end = match (&duration, x.gamma > 1) {
        (Some(exp), true) => x.theta + exp.sample(rng),
        _ => f64::INFINITY,
    };

    let record_until = |from: &State, until: f64, path: &mut Vec<PathSample>, next_node: &mut usize| {
        while *next_node <= last_node && *next_node as f64 * dt <= until + 1e-9 {
            let t = (*next_node as f64 * dt - from.theta).max(0.0);
            let s = model.flow_unchecked(from, t);
            path.push(PathSample {
                theta: *next_node as f64 * dt,
                p: s.p,
                r: s.r,
                gamma: s.gamma,
                n: s.n,
                sigma: s.sigma,
                cost_rate: model.gradual_cost(&s),
            });
            *next_node += 1;
        }
    };

    while !x.is_delta() {
        let (t_star, boundary) = model.time_to_boundary_unchecked(&x);
        let jump_in = effect_end - x.theta;
        if x.gamma > 1 && jump_in < t_star {
            record_until(&x, effect_end, &mut path, &mut next_node);
            let pre = model.flow_unchecked(&x, jump_in);
            events.push(Event {
                theta: pre.theta,
                kind: EventKind::SpontaneousJump,
                state: pre,
                cost: 0.0,
            });
            x = model.post_jump(&pre, BoundaryId::Interior, 1);
            effect_end = f64::INFINITY;
            continue;
        }
        let mut z = model.flow_unchecked(&x, t_star);
        snap(&mut z);
        record_until(&x, z.theta, &mut path, &mut next_node);
        match boundary {
            BoundaryId::Xi2 => {
                events.push(Event {
                    theta: z.theta,
                    kind: EventKind::Horizon,
                    state: z,
                    cost: 0.0,
                });
                x = model.post_jump(&z, boundary, 1);
            }
            BoundaryId::Xi5 => {
                events.push(Event {
                    theta: z.theta,
                    kind: EventKind::BoundaryHit(boundary),
                    state: z,
                    cost: 0.0,
                });
                x = model.post_jump(&z, boundary, 1);
                effect_end = f64::INFINITY;
            }
            BoundaryId::Xi1 | BoundaryId::Xi3 | BoundaryId::Xi4 => {
                let this_cycle = if boundary == BoundaryId::Xi3 { cycle } else { cycle + 1 };
                let dose = policy.choose(model, &z, boundary, this_cycle)?;
                let gamma = cfg
                    .gamma_of(dose)
                    .filter(|g| model.admissible_gammas(boundary).contains(g))
                    .ok_or_else(|| {
                        Error::ProtocolViolation(format!(
                            "{} chose dose {dose} on {boundary} at {z}",
                            policy.name()
                        ))
                    })?;
                cycle = this_cycle;
                let cost = model.impulse_cost_at(boundary, gamma);
                events.push(Event {
                    theta: z.theta,
                    kind: EventKind::Injection { boundary, dose },
                    state: z,
                    cost,
                });
                x = model.post_jump(&z, boundary, gamma);
                effect_end = match (&duration, gamma > 1) {
                    (Some(exp), true) => x.theta + exp.sample(rng),
                    _ => f64::INFINITY,
                };
            }
            BoundaryId::Interior => unreachable!("the flow always stops on the boundary"),
        }
    }

    let injections = events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Injection { dose, .. } if dose > 0.0))
        .count();
    let under = |s: &PathSample| s.theta >= 1.0 - 1e-9 && s.p + s.r <= cfg.threshold;
    let last = path.len() - 1;
    let days_under_threshold = path
        .iter()
        .enumerate()
        .filter(|(_, s)| under(s))
        .map(|(k, _)| node_weight(k, last, dt))
        .sum();
    let first_node = first_node as usize;
    let daily: Vec<f64> = path
        .iter()
        .enumerate()
        .filter(|(k, s)| (first_node + k) % spd == 0 && s.theta >= 1.0 - 1e-9)
        .map(|(_, s)| s.p + s.r)
        .collect();
    let cd4_mean = daily.iter().sum::<f64>() / daily.len() as f64;
    let mut record = TrajectoryRecord {
        events,
        path,
        dt,
        discounted_cost: 0.0,
        injections,
        days_under_threshold,
        cd4_mean,
    };
    record.discounted_cost = discounted_cost(&record, cfg.alpha);
    Ok(record)
}
