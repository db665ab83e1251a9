//! The controlled PDMP: deterministic flow, active boundary, admissible
//! actions, transition kernel and cost functionals.

mod config;
mod ode;
mod params;
mod state;

use std::ops::RangeInclusive;

pub use config::{GridSpec, ModelConfig, PiScale, INJECTION_SPACING, UNDER_THRESHOLD_COST_RATE};
pub use ode::{Affine2, LinearFlow};
pub use params::{equilibrium, PatientParams};
pub use state::{BoundaryId, State};

pub(crate) use state::DAY_EPS;

use crate::error::{Error, Result};

const SPACING: f64 = INJECTION_SPACING as f64;

/// Proliferation rate for dose index `gamma` at the `n`-th injection of a cycle.
pub fn proliferation_rate(
    gamma: u32,
    n: u32,
    params: &PatientParams,
    config: &ModelConfig,
) -> Result<f64> {
    if gamma == 0 || gamma as usize > config.doses.len() {
        return Err(Error::invalid(format!(
            "gamma = {gamma} outside 1..={}",
            config.doses.len()
        )));
    }
    if n == 0 || n > config.n_inj || n as usize > params.beta_pi.len() {
        return Err(Error::invalid(format!("n = {n} outside 1..={}", config.n_inj)));
    }
    if gamma == 1 {
        return Ok(params.pi0);
    }
    let dose = config.doses[gamma as usize - 1];
    let effect = params.beta_pi[n as usize - 1] * dose.powf(0.25);
    Ok(match config.pi_scale {
        PiScale::Log => (params.pi0.ln() + effect).exp(),
        PiScale::Additive => params.pi0 + effect,
    })
}

/// Patient parameters and configuration bundled with the per-(gamma, n)
/// linear flows.
#[derive(Debug, Clone)]
pub struct Model {
    params: PatientParams,
    config: ModelConfig,
    flows: Vec<LinearFlow>,
    day: Vec<Affine2>,
}

impl Model {
    pub fn new(params: PatientParams, config: ModelConfig) -> Result<Self> {
        config.validate()?;
        params.validate(config.n_inj)?;
        let mut flows = Vec::new();
        for n in 1..=config.n_inj {
            for gamma in 1..=config.doses.len() as u32 {
                let pi = proliferation_rate(gamma, n, &params, &config)?;
                flows.push(LinearFlow::new(&params, pi));
            }
        }
        let day = flows.iter().map(|f| f.propagator(1.0)).collect();
        Ok(Model {
            params,
            config,
            flows,
            day,
        })
    }

    pub fn params(&self) -> &PatientParams {
        &self.params
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// SHA-256 of the canonical JSON form of the patient and model
    /// configuration. Field order is fixed by the types, so the hash does
    /// not depend on how the source file ordered its keys.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_vec(&(&self.params, &self.config))
            .expect("parameter types always serialize");
        Sha256::digest(&canonical)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn horizon(&self) -> f64 {
        self.config.horizon as f64
    }

    /// Zero-based block index of `(gamma, n)`.
    #[inline]
    pub(crate) fn block_of(&self, gamma: u32, n: u32) -> usize {
        (gamma as usize - 1) + self.config.doses.len() * (n as usize - 1)
    }

    pub fn linear_flow(&self, gamma: u32, n: u32) -> &LinearFlow {
        &self.flows[self.block_of(gamma, n)]
    }

    /// One-day propagator of the (p, r) compartments for `(gamma, n)`.
    pub fn day_propagator(&self, gamma: u32, n: u32) -> &Affine2 {
        &self.day[self.block_of(gamma, n)]
    }

    pub fn proliferation_rate(&self, gamma: u32, n: u32) -> Result<f64> {
        proliferation_rate(gamma, n, &self.params, &self.config)
    }

    /// The state reached after following the deterministic motion for `t` days.
    ///
    /// Compartments stay frozen while `theta < 1`. Only valid up to the first
    /// boundary hit.
    pub fn flow(&self, x: &State, t: f64) -> Result<State> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("flow time must be >= 0, got {t}")));
        }
        Ok(self.flow_unchecked(x, t))
    }

    #[inline]
    pub(crate) fn flow_unchecked(&self, x: &State, t: f64) -> State {
        if x.is_delta() || t == 0.0 {
            return *x;
        }
        let frozen = if x.theta < 1.0 { t.min(1.0 - x.theta) } else { 0.0 };
        let moving = t - frozen;
        let (p, r) = if moving > 0.0 {
            self.linear_flow(x.gamma, x.n).advance(x.p, x.r, moving)
        } else {
            (x.p, x.r)
        };
        State {
            sigma: x.sigma + t,
            theta: x.theta + t,
            p,
            r,
            ..*x
        }
    }

    fn on_day_grid(v: f64) -> bool {
        (v - v.round()).abs() <= DAY_EPS
    }

    /// Classify a state against the five parts of the active boundary.
    ///
    /// The absorbing state is never on the active boundary.
    pub fn classify(&self, x: &State) -> BoundaryId {
        if x.is_delta() {
            return BoundaryId::Interior;
        }
        let cfg = &self.config;
        if x.theta >= self.horizon() - DAY_EPS {
            return BoundaryId::Xi2;
        }
        let pre = x.is_pre_study();
        let at_spacing = (x.sigma - SPACING).abs() <= DAY_EPS;
        if !pre && x.n < cfg.n_inj && at_spacing {
            return BoundaryId::Xi3;
        }
        if !pre && x.gamma > 1 && x.n == cfg.n_inj && at_spacing {
            return BoundaryId::Xi5;
        }
        if !pre
            && x.gamma == 1
            && x.n == cfg.n_inj
            && Self::on_day_grid(x.sigma)
            && x.sigma >= cfg.sigma_min as f64 - DAY_EPS
            && x.cd4() <= cfg.threshold
        {
            return BoundaryId::Xi4;
        }
        if pre && (x.theta - 1.0).abs() <= DAY_EPS {
            return BoundaryId::Xi1;
        }
        BoundaryId::Interior
    }

    /// Time until the flow from `x` first reaches the active boundary, and the
    /// boundary reached. The threshold condition is checked at day marks only.
    ///
    /// Ties are resolved with priority Xi2 > Xi3 > Xi5 > Xi4 > Xi1.
    pub fn time_to_boundary(&self, x: &State) -> Result<(f64, BoundaryId)> {
        if x.is_delta() {
            return Err(Error::invalid("the absorbing state has no boundary to reach"));
        }
        Ok(self.time_to_boundary_unchecked(x))
    }

    pub(crate) fn time_to_boundary_unchecked(&self, x: &State) -> (f64, BoundaryId) {
        let cfg = &self.config;
        let mut best = ((self.horizon() - x.theta).max(0.0), BoundaryId::Xi2);
        let consider = |t: f64, id: BoundaryId, best: &mut (f64, BoundaryId)| {
            if t >= -DAY_EPS && t < best.0 - DAY_EPS {
                *best = (t.max(0.0), id);
            }
        };
        let pre = x.is_pre_study();
        if !pre && x.n < cfg.n_inj {
            consider(SPACING - x.sigma, BoundaryId::Xi3, &mut best);
        }
        if !pre && x.gamma > 1 && x.n == cfg.n_inj {
            consider(SPACING - x.sigma, BoundaryId::Xi5, &mut best);
        }
        if !pre && x.gamma == 1 && x.n == cfg.n_inj {
            if let Some(t) = self.threshold_hit(x, best.0) {
                consider(t, BoundaryId::Xi4, &mut best);
            }
        }
        if pre {
            consider(1.0 - x.theta, BoundaryId::Xi1, &mut best);
        }
        best
    }

    /// First day mark `t < limit` at which `sigma >= sigma_min` and the CD4
    /// count is at or below the threshold.
    fn threshold_hit(&self, x: &State, limit: f64) -> Option<f64> {
        let cfg = &self.config;
        // day marks lie where sigma is an integer
        let to_mark = {
            let frac = x.sigma - x.sigma.floor();
            if frac <= DAY_EPS || 1.0 - frac <= DAY_EPS {
                0.0
            } else {
                1.0 - frac
            }
        };
        let wait = (cfg.sigma_min as f64 - x.sigma).max(0.0);
        let mut t = if wait > to_mark {
            (x.sigma + wait).round() - x.sigma
        } else {
            to_mark
        };
        if t >= limit - DAY_EPS {
            return None;
        }
        let start = self.flow_unchecked(x, t);
        let (mut p, mut r) = (start.p, start.r);
        let day = self.day_propagator(x.gamma, x.n);
        while t < limit - DAY_EPS {
            if p + r <= cfg.threshold {
                return Some(t);
            }
            (p, r) = day.apply(p, r);
            t += 1.0;
        }
        None
    }

    /// Doses that may be chosen at a boundary state.
    pub fn admissible_actions(&self, x: &State) -> Result<Vec<f64>> {
        let boundary = self.classify(x);
        if !boundary.is_boundary() {
            return Err(Error::invalid(format!("{x} is not on the active boundary")));
        }
        Ok(self
            .admissible_gammas(boundary)
            .map(|g| self.config.doses[g as usize - 1])
            .collect())
    }

    /// Dose indices (gamma values) admissible on `boundary`.
    pub fn admissible_gammas(&self, boundary: BoundaryId) -> RangeInclusive<u32> {
        let top = self.config.doses.len() as u32;
        match boundary {
            BoundaryId::Xi1 | BoundaryId::Xi4 => 2..=top,
            BoundaryId::Xi3 => 1..=top,
            #[allow(clippy::reversed_empty_ranges)]
            BoundaryId::Xi2 | BoundaryId::Xi5 | BoundaryId::Interior => 1..=0,
        }
    }

    /// Post-jump state. `dose` is required on Xi1/Xi3/Xi4 and must be absent
    /// on Xi2/Xi5 and for spontaneous jumps from interior states.
    pub fn apply_kernel(&self, x: &State, dose: Option<f64>) -> Result<State> {
        if x.is_delta() {
            return Ok(*x);
        }
        let boundary = self.classify(x);
        let gamma = match (boundary.has_action(), dose) {
            (true, Some(d)) => {
                let gamma = self
                    .config
                    .gamma_of(d)
                    .filter(|g| self.admissible_gammas(boundary).contains(g))
                    .ok_or_else(|| {
                        Error::invalid(format!("dose {d} is not admissible on {boundary} at {x}"))
                    })?;
                gamma
            }
            (true, None) => {
                return Err(Error::invalid(format!("a dose is required on {boundary} at {x}")))
            }
            (false, Some(d)) => {
                return Err(Error::invalid(format!(
                    "no action exists on {boundary} at {x}, got dose {d}"
                )))
            }
            (false, None) => 1,
        };
        Ok(self.post_jump(x, boundary, gamma))
    }

    /// Kernel without admissibility checks; `gamma` is ignored where no
    /// action exists.
    #[inline]
    pub(crate) fn post_jump(&self, x: &State, boundary: BoundaryId, gamma: u32) -> State {
        match boundary {
            BoundaryId::Xi1 => State::new(gamma, 1, 0.0, 1.0, self.params.p0, self.params.r0),
            BoundaryId::Xi2 => State::delta(self.config.horizon),
            BoundaryId::Xi3 => State::new(gamma, x.n + 1, 0.0, x.theta, x.p, x.r),
            BoundaryId::Xi4 => State::new(gamma, 1, 0.0, x.theta, x.p, x.r),
            BoundaryId::Xi5 | BoundaryId::Interior => State { gamma: 1, ..*x },
        }
    }

    /// Gradual cost rate: 1/30 per day at or below the threshold once the study started.
    #[inline]
    pub fn gradual_cost(&self, x: &State) -> f64 {
        if !x.is_delta() && x.theta >= 1.0 - DAY_EPS && x.cd4() <= self.config.threshold {
            UNDER_THRESHOLD_COST_RATE
        } else {
            0.0
        }
    }

    /// Impulse cost of choosing `dose` at the boundary state `x`.
    pub fn impulse_cost(&self, x: &State, dose: f64) -> f64 {
        let gamma = if dose == 0.0 { 1 } else { 2 };
        self.impulse_cost_at(self.classify(x), gamma)
    }

    #[inline]
    pub(crate) fn impulse_cost_at(&self, boundary: BoundaryId, gamma: u32) -> f64 {
        if !self.config.impulse_costs {
            return 0.0;
        }
        match boundary {
            BoundaryId::Xi1 | BoundaryId::Xi4 => 1.0,
            BoundaryId::Xi3 if gamma > 1 => 1.0,
            _ => 0.0,
        }
    }
}
