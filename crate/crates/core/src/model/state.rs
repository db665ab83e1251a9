use std::fmt;

use serde::{Deserialize, Serialize};

use super::params::PatientParams;

/// Tolerance used when comparing day counters against integer day marks.
pub(crate) const DAY_EPS: f64 = 1e-9;

/// A point of the PDMP state space, `x = (gamma, n, sigma, theta, p, r)`.
///
/// `gamma` is the dose index plus one (1 means no active injection effect),
/// `n` the number of injections performed in the ongoing cycle, `sigma` the
/// days since the last injection and `theta` the running time. The absorbing
/// end-of-study state is encoded as `(0, 0, 0, T_h, 0, 0)`.
///
/// The day counters are integers on the solver grid; they become fractional in
/// simulation between a spontaneous jump and the next day boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub gamma: u32,
    pub n: u32,
    pub sigma: f64,
    pub theta: f64,
    pub p: f64,
    pub r: f64,
}

impl State {
    pub fn new(gamma: u32, n: u32, sigma: f64, theta: f64, p: f64, r: f64) -> Self {
        State {
            gamma,
            n,
            sigma,
            theta,
            p,
            r,
        }
    }

    /// The absorbing state reached at the horizon.
    pub fn delta(horizon: u32) -> Self {
        State::new(0, 0, 0.0, horizon as f64, 0.0, 0.0)
    }

    /// Initial state one day before the first possible injection.
    pub fn initial(params: &PatientParams) -> Self {
        State::new(1, 1, 0.0, 0.0, params.p0, params.r0)
    }

    #[inline]
    pub fn is_delta(&self) -> bool {
        self.gamma == 0
    }

    /// Before the study starts: no injection yet, `sigma == theta <= 1`.
    ///
    /// Every state reached after the first injection has `theta >= sigma + 1`.
    #[inline]
    pub fn is_pre_study(&self) -> bool {
        self.gamma == 1
            && self.n == 1
            && self.theta <= 1.0 + DAY_EPS
            && (self.sigma - self.theta).abs() <= DAY_EPS
    }

    /// Total CD4 count `p + r`.
    #[inline]
    pub fn cd4(&self) -> f64 {
        self.p + self.r
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_delta() {
            return write!(f, "Δ");
        }
        write!(
            f,
            "(γ={}, n={}, σ={}, θ={}, p={:.3}, r={:.3})",
            self.gamma, self.n, self.sigma, self.theta, self.p, self.r
        )
    }
}

/// Which part of the active boundary a state lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryId {
    /// Study start (`theta = 1`, no injection yet).
    Xi1,
    /// Horizon reached.
    Xi2,
    /// Seven days after an injection inside an unfinished cycle.
    Xi3,
    /// Cycle finished, at least `sigma_min` days elapsed and CD4 at or below threshold.
    Xi4,
    /// Effect of the last injection of a cycle still active after seven days.
    Xi5,
    Interior,
}

impl BoundaryId {
    pub fn is_boundary(self) -> bool {
        self != BoundaryId::Interior
    }

    /// Whether a decision (dose choice) is taken on this boundary.
    pub fn has_action(self) -> bool {
        matches!(self, BoundaryId::Xi1 | BoundaryId::Xi3 | BoundaryId::Xi4)
    }
}

impl fmt::Display for BoundaryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundaryId::Xi1 => "Xi1",
            BoundaryId::Xi2 => "Xi2",
            BoundaryId::Xi3 => "Xi3",
            BoundaryId::Xi4 => "Xi4",
            BoundaryId::Xi5 => "Xi5",
            BoundaryId::Interior => "interior",
        };
        f.write_str(s)
    }
}
