//! Pointwise dynamic-programming operators on an interpolated value table.
//!
//! These evaluate one state at a time straight from the model (flow, boundary
//! detection, kernel). The sweeps in [`super::sweep`] compute the same
//! quantities for whole rows with precomputed flow stencils.

use super::table::ValueTable;
use crate::error::{Error, Result};
use crate::model::{BoundaryId, Model, State};

/// Running part of the operator: `C^g(x) + K V(1, n, sigma, theta, p, r)`.
///
/// Spontaneous jumps only reset `gamma`, so after uniformization the jump
/// term reduces to the value at the reset state. The idle block has no jumps
/// and is not uniformized (see [`ModelConfig::jump_rate`]), so there `RV = C^g`.
///
/// [`ModelConfig::jump_rate`]: crate::model::ModelConfig::jump_rate
pub fn op_r(model: &Model, table: &ValueTable, x: &State) -> Result<f64> {
    if x.is_delta() {
        return Ok(model.config().k() * table.value_at_delta);
    }
    let rate = model.config().jump_rate(x.gamma);
    if rate == 0.0 {
        return Ok(model.gradual_cost(x));
    }
    let reset = State { gamma: 1, ..*x };
    Ok(model.gradual_cost(x) + rate * table.interpolate(&reset)?)
}

/// Boundary part: the cheapest admissible action at `z` and the dose
/// achieving it (`None` where no action exists). Ties go to the smaller dose.
pub fn op_t(model: &Model, table: &ValueTable, z: &State) -> Result<(f64, Option<f64>)> {
    if z.is_delta() {
        return Ok((table.value_at_delta, None));
    }
    let boundary = model.classify(z);
    if !boundary.is_boundary() {
        return Err(Error::invalid(format!("{z} is not on the active boundary")));
    }
    op_t_at(model, table, z, boundary)
}

pub(crate) fn op_t_at(
    model: &Model,
    table: &ValueTable,
    z: &State,
    boundary: BoundaryId,
) -> Result<(f64, Option<f64>)> {
    match boundary {
        BoundaryId::Xi2 => Ok((table.value_at_delta, None)),
        BoundaryId::Xi5 => Ok((table.interpolate(&model.post_jump(z, boundary, 1))?, None)),
        BoundaryId::Interior => Err(Error::invalid(format!("{z} is not on the active boundary"))),
        _ => {
            let mut best: Option<(f64, u32)> = None;
            for gamma in model.admissible_gammas(boundary) {
                let post = model.post_jump(z, boundary, gamma);
                let v = model.impulse_cost_at(boundary, gamma) + table.interpolate(&post)?;
                if best.map_or(true, |(b, _)| v < b) {
                    best = Some((v, gamma));
                }
            }
            let (v, gamma) = best.expect("every action boundary has an admissible dose");
            Ok((v, model.config().dose_of(gamma)))
        }
    }
}

/// One application of the dynamic-programming operator at `y`:
///
/// ```text
/// BV(y) = ∫_0^{t*} e^{-(K+α)t} RV(φ(y,t)) dt + e^{-(K+α)t*} TV(φ(y,t*))
/// ```
///
/// with `K` replaced by the block's jump rate (0 for `gamma = 1`),
/// and the composite trapezoidal rule on nodes `0, dt, 2dt, ...` (a shorter
/// last panel when `t*` is not a multiple of `dt`). `BV(Δ) = K/(K+α) V(Δ)`.
pub fn op_b(model: &Model, table: &ValueTable, y: &State) -> Result<f64> {
    let cfg = model.config();
    if y.is_delta() {
        return Ok(cfg.k() / (cfg.k() + cfg.alpha) * table.value_at_delta);
    }
    let c = cfg.jump_rate(y.gamma) + cfg.alpha;
    let (t_star, boundary) = model.time_to_boundary_unchecked(y);
    let integrand = |t: f64| -> Result<f64> {
        Ok((-c * t).exp() * op_r(model, table, &model.flow_unchecked(y, t))?)
    };
    let dt = cfg.dt;
    let full = (t_star / dt + 1e-9).floor() as usize;
    let mut g = 0.0;
    let mut prev = integrand(0.0)?;
    for k in 1..=full {
        let next = integrand(k as f64 * dt)?;
        g += 0.5 * dt * (prev + next);
        prev = next;
    }
    let tail = t_star - full as f64 * dt;
    if tail > 1e-9 {
        g += 0.5 * tail * (prev + integrand(t_star)?);
    }
    let z = model.flow_unchecked(y, t_star);
    let (tv, _) = op_t_at(model, table, &z, boundary)?;
    Ok(g + (-c * t_star).exp() * tv)
}
