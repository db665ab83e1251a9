use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Days between two injections of a cycle, and the maximal duration of an
/// injection's effect on the proliferation rate.
pub const INJECTION_SPACING: u32 = 7;

/// Gradual cost per day spent at or below the threshold (time counted in months).
pub const UNDER_THRESHOLD_COST_RATE: f64 = 1.0 / 30.0;

/// How a dose modifies the proliferation rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiScale {
    /// `pi = exp(ln pi0 + beta * d^0.25)`.
    #[default]
    Log,
    /// `pi = pi0 + beta * d^0.25`, kept for sensitivity checks.
    Additive,
}

/// Regular (p, r) lattice and the memory cap for the value tables. Missing
/// fields take their default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub p_min: f64,
    pub p_max: f64,
    pub h_p: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub h_r: f64,
    pub max_memory_mb: f64,
}

fn default_memory_cap() -> f64 {
    3072.0
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            p_min: 0.0,
            p_max: 300.0,
            h_p: 10.0,
            r_min: 0.0,
            r_max: 1500.0,
            h_r: 25.0,
            max_memory_mb: default_memory_cap(),
        }
    }
}

impl GridSpec {
    pub fn n_p(&self) -> usize {
        lattice_count(self.p_min, self.p_max, self.h_p)
    }

    pub fn n_r(&self) -> usize {
        lattice_count(self.r_min, self.r_max, self.h_r)
    }

    fn validate(&self) -> Result<()> {
        for (name, lo, hi, h) in [
            ("p", self.p_min, self.p_max, self.h_p),
            ("r", self.r_min, self.r_max, self.h_r),
        ] {
            if !(lo.is_finite() && hi.is_finite() && h.is_finite() && h > 0.0 && hi > lo) {
                return Err(Error::Config(format!(
                    "{name} lattice needs {name}_min < {name}_max and a positive step"
                )));
            }
            if lo < 0.0 {
                return Err(Error::Config(format!("{name}_min must be >= 0")));
            }
            let steps = (hi - lo) / h;
            if (steps - steps.round()).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "({name}_max - {name}_min) / h_{name} = {steps} is not an integer"
                )));
            }
        }
        if !(self.max_memory_mb > 0.0) {
            return Err(Error::Config("max_memory_mb must be positive".into()));
        }
        Ok(())
    }
}

fn lattice_count(lo: f64, hi: f64, h: f64) -> usize {
    ((hi - lo) / h).round() as usize + 1
}

/// Control problem setup: doses, cycle structure, horizon, costs and the
/// numerical discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Available doses in µg/kg, starting with the fictive dose 0.
    pub doses: Vec<f64>,
    /// Injections per cycle.
    pub n_inj: u32,
    /// Study horizon in days.
    pub horizon: u32,
    /// Minimum number of days after the last injection of a cycle before a
    /// new cycle may start.
    pub sigma_min: u32,
    /// Discount rate (/day).
    pub alpha: f64,
    /// Hazard of a spontaneous end of an injection's effect (/day).
    pub eta: f64,
    /// Quadrature step in days; must divide one day.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// CD4 threshold (cells/µL).
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub pi_scale: PiScale,
    /// Charge impulse costs. Disabling this is only meant for testing.
    #[serde(default = "default_true")]
    pub impulse_costs: bool,
    #[serde(default)]
    pub grid: GridSpec,
}

fn default_dt() -> f64 {
    1.0
}

fn default_threshold() -> f64 {
    500.0
}

fn default_true() -> bool {
    true
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            doses: vec![0.0, 10.0, 20.0],
            n_inj: 2,
            horizon: 365,
            sigma_min: 70,
            alpha: 0.001,
            eta: 0.1,
            dt: default_dt(),
            threshold: default_threshold(),
            pi_scale: PiScale::Log,
            impulse_costs: true,
            grid: GridSpec::default(),
        }
    }
}

impl ModelConfig {
    /// Number of positive doses (`m_d`).
    pub fn m_d(&self) -> usize {
        self.doses.len() - 1
    }

    /// Uniformization constant, an upper bound of the jump intensity.
    pub fn k(&self) -> f64 {
        self.eta
    }

    /// Rate at which the operator is uniformized in block `gamma`: `K` while
    /// an effect can end, 0 in the idle block where no spontaneous jump
    /// exists (a fictitious jump there would only re-interpolate the table).
    pub fn jump_rate(&self, gamma: u32) -> f64 {
        if gamma > 1 {
            self.k()
        } else {
            0.0
        }
    }

    /// Quadrature nodes per day.
    pub fn steps_per_day(&self) -> usize {
        (1.0 / self.dt).round() as usize
    }

    /// Index of `dose` in the dose vector, plus one. Dose 0 maps to 1.
    pub fn gamma_of(&self, dose: f64) -> Option<u32> {
        self.doses
            .iter()
            .position(|d| (d - dose).abs() <= 1e-9 * d.abs().max(1.0))
            .map(|k| k as u32 + 1)
    }

    pub fn dose_of(&self, gamma: u32) -> Option<f64> {
        gamma
            .checked_sub(1)
            .and_then(|k| self.doses.get(k as usize))
            .copied()
    }

    pub fn validate(&self) -> Result<()> {
        if self.doses.len() < 2 {
            return Err(Error::Config("need dose 0 and at least one positive dose".into()));
        }
        if self.doses[0] != 0.0 {
            return Err(Error::Config("first dose must be 0".into()));
        }
        if self.doses.iter().any(|d| !d.is_finite()) || self.doses.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "doses must be strictly increasing, got {:?}",
                self.doses
            )));
        }
        if self.n_inj == 0 {
            return Err(Error::Config("n_inj must be at least 1".into()));
        }
        if self.sigma_min < INJECTION_SPACING * self.n_inj {
            return Err(Error::Config(format!(
                "sigma_min = {} must be >= 7 * n_inj = {}",
                self.sigma_min,
                INJECTION_SPACING * self.n_inj
            )));
        }
        let first_cycle = 1 + INJECTION_SPACING * self.n_inj;
        if self.horizon < first_cycle {
            return Err(Error::Config(format!(
                "horizon {} is shorter than one full cycle ({first_cycle} days)",
                self.horizon
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config("alpha must be > 0".into()));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::Config("eta must be >= 0".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0 && self.dt <= 1.0) {
            return Err(Error::Config("dt must be in (0, 1]".into()));
        }
        let per_day = 1.0 / self.dt;
        if (per_day - per_day.round()).abs() > 1e-9 {
            return Err(Error::Config(format!("dt = {} does not divide one day", self.dt)));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config("threshold must be finite".into()));
        }
        self.grid.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.m_d(), 2);
        assert_eq!(cfg.grid.n_p(), 31);
        assert_eq!(cfg.grid.n_r(), 61);
    }

    #[test]
    fn gamma_dose_mapping() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.gamma_of(0.0), Some(1));
        assert_eq!(cfg.gamma_of(10.0), Some(2));
        assert_eq!(cfg.gamma_of(20.0), Some(3));
        assert_eq!(cfg.gamma_of(15.0), None);
        assert_eq!(cfg.dose_of(3), Some(20.0));
        assert_eq!(cfg.dose_of(0), None);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            ModelConfig { doses: vec![1.0, 10.0], ..Default::default() },
            ModelConfig { doses: vec![0.0, 20.0, 10.0], ..Default::default() },
            ModelConfig { sigma_min: 10, ..Default::default() },
            ModelConfig { alpha: 0.0, ..Default::default() },
            ModelConfig { dt: 0.3, ..Default::default() },
            ModelConfig {
                grid: GridSpec { h_p: 7.0, ..Default::default() },
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        ModelConfig { dt: 0.25, ..Default::default() }.validate().unwrap();
    }
}
