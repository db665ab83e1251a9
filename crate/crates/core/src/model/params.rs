//! Patient-level biological parameters of the resting/proliferating CD4 model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Biological rates and baseline counts for one patient.
///
/// Rates are per day, counts in cells/µL. `beta_pi[k]` is the effect of the
/// (k+1)-th injection of a cycle on the log proliferation rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientParams {
    /// Thymic output into the resting compartment.
    pub lambda: f64,
    /// Division rate of proliferating cells (each division yields two resting cells).
    pub rho: f64,
    /// Baseline proliferation rate (resting -> proliferating).
    pub pi0: f64,
    pub mu_r: f64,
    pub mu_p: f64,
    pub beta_pi: Vec<f64>,
    /// Resting count when the study starts.
    pub r0: f64,
    /// Proliferating count when the study starts.
    pub p0: f64,
}

impl PatientParams {
    /// Average-baseline reference patient.
    pub fn patient_a() -> Self {
        PatientParams {
            lambda: 2.55,
            rho: 2.06,
            pi0: 0.049,
            mu_r: 0.054,
            mu_p: 0.068,
            beta_pi: vec![0.918, 0.721],
            r0: 332.0,
            p0: 8.0,
        }
    }

    /// Low-baseline reference patient.
    pub fn patient_b() -> Self {
        PatientParams {
            lambda: 1.86,
            rho: 1.10,
            r0: 187.0,
            ..Self::patient_a()
        }
    }

    pub fn validate(&self, n_inj: u32) -> Result<()> {
        let rates = [
            ("lambda", self.lambda),
            ("rho", self.rho),
            ("pi0", self.pi0),
            ("mu_r", self.mu_r),
            ("mu_p", self.mu_p),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be a positive rate, got {v}")));
            }
        }
        if !(self.r0.is_finite() && self.r0 > 0.0 && self.p0.is_finite() && self.p0 > 0.0) {
            return Err(Error::Config(format!(
                "initial counts must be positive, got r0={} p0={}",
                self.r0, self.p0
            )));
        }
        if self.beta_pi.len() != n_inj as usize {
            return Err(Error::Config(format!(
                "beta_pi has {} entries but cycles have {} injections",
                self.beta_pi.len(),
                n_inj
            )));
        }
        if self.beta_pi.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config("beta_pi entries must be finite".into()));
        }
        if self.beta_pi.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config(format!(
                "beta_pi must be non-increasing within a cycle, got {:?}",
                self.beta_pi
            )));
        }
        Ok(())
    }
}

/// Stationary point of the two-compartment system at the baseline
/// proliferation rate. Returns `(r, p)`.
pub fn equilibrium(params: &PatientParams) -> Result<(f64, f64)> {
    let turnover = params.mu_p + params.rho;
    let denominator = params.mu_r + params.pi0 - 2.0 * params.rho * params.pi0 / turnover;
    if !(denominator > 0.0) {
        return Err(Error::NoEquilibrium { denominator });
    }
    let r = params.lambda / denominator;
    let p = params.pi0 * r / turnover;
    Ok((r, p))
}
