use std::fmt;

use crate::error::{Error, Result};
use crate::model::{BoundaryId, Model, ModelConfig, State};
use crate::solver::{op_t, ValueTable};

/// Names accepted by [`Protocol::parse`] besides the `custom:` form.
pub const PROTOCOL_NAMES: [&str; 4] = ["2inj-d20", "2inj-d10", "1inj-d20", "2then1-d20"];

/// A fixed injection schedule: the doses of each cycle, the last cycle's
/// pattern repeating for all later cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub name: String,
    pub cycles: Vec<Vec<f64>>,
}

impl Protocol {
    /// Parse a protocol name or a custom description.
    ///
    /// Custom descriptions list the doses of successive cycles, cycles
    /// separated by `,` and the injections of a cycle by `+`:
    /// `custom:20+20,20` is one cycle of two dose-20 injections followed by
    /// single dose-20 injections.
    pub fn parse(spec: &str) -> Result<Protocol> {
        let cycles = match spec {
            "2inj-d20" => vec![vec![20.0, 20.0]],
            "2inj-d10" => vec![vec![10.0, 10.0]],
            "1inj-d20" => vec![vec![20.0]],
            "2then1-d20" => vec![vec![20.0, 20.0], vec![20.0]],
            _ => {
                let body = spec.strip_prefix("custom:").ok_or_else(|| {
                    Error::invalid(format!(
                        "unknown protocol {spec:?}; valid names are {} or custom:<d+d,...>",
                        PROTOCOL_NAMES.join(", ")
                    ))
                })?;
                body.split(',')
                    .map(|cycle| {
                        cycle
                            .split('+')
                            .map(|d| {
                                d.trim()
                                    .parse::<f64>()
                                    .map_err(|_| Error::invalid(format!("bad dose {d:?} in {spec:?}")))
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(Protocol {
            name: spec.to_string(),
            cycles,
        })
    }

    /// Check the schedule against the available doses and the cycle length.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.cycles.is_empty() {
            return Err(Error::invalid(format!("protocol {} has no cycles", self.name)));
        }
        for (i, cycle) in self.cycles.iter().enumerate() {
            if cycle.is_empty() || cycle.len() > config.n_inj as usize {
                return Err(Error::invalid(format!(
                    "protocol {}: cycle {} has {} injections, allowed 1..={}",
                    self.name,
                    i + 1,
                    cycle.len(),
                    config.n_inj
                )));
            }
            if cycle[0] == 0.0 {
                return Err(Error::invalid(format!(
                    "protocol {}: cycle {} must start with a positive dose",
                    self.name,
                    i + 1
                )));
            }
            if let Some(d) = cycle.iter().find(|d| config.gamma_of(**d).is_none()) {
                return Err(Error::invalid(format!(
                    "protocol {}: dose {d} is not one of {:?}",
                    self.name, config.doses
                )));
            }
        }
        Ok(())
    }

    /// Dose for the `slot`-th injection (one-based) of cycle `cycle` (one-based).
    pub fn dose(&self, cycle: usize, slot: usize) -> f64 {
        let pattern = &self.cycles[cycle.clamp(1, self.cycles.len()) - 1];
        pattern.get(slot - 1).copied().unwrap_or(0.0)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// A rule choosing the dose at each decision boundary.
#[derive(Debug, Clone)]
pub enum Policy<'a> {
    /// Greedy with respect to a converged value table.
    Optimal(&'a ValueTable),
    Fixed(Protocol),
}

impl Policy<'_> {
    pub fn name(&self) -> String {
        match self {
            Policy::Optimal(_) => "optimal".to_string(),
            Policy::Fixed(p) => p.name.clone(),
        }
    }

    /// Dose at the decision boundary `z`. `cycle` is the one-based index of
    /// the cycle the injection belongs to.
    pub fn choose(&self, model: &Model, z: &State, boundary: BoundaryId, cycle: usize) -> Result<f64> {
        match self {
            Policy::Optimal(table) => optimal_action(model, table, z),
            Policy::Fixed(protocol) => match boundary {
                BoundaryId::Xi1 | BoundaryId::Xi4 => Ok(protocol.dose(cycle, 1)),
                BoundaryId::Xi3 => Ok(protocol.dose(cycle, z.n as usize + 1)),
                other => Err(Error::invalid(format!("no action exists on {other}"))),
            },
        }
    }
}

/// A fixed policy from a protocol name or custom description.
pub fn make_fixed_protocol(spec: &str, config: &ModelConfig) -> Result<Policy<'static>> {
    let protocol = Protocol::parse(spec)?;
    protocol.validate(config)?;
    Ok(Policy::Fixed(protocol))
}

/// Dose minimizing impulse cost plus the interpolated value after the jump.
/// Ties go to the smaller dose.
pub fn optimal_action(model: &Model, table: &ValueTable, z: &State) -> Result<f64> {
    let boundary = model.classify(z);
    if !boundary.has_action() {
        return Err(Error::invalid(format!("no action exists at {z} ({boundary})")));
    }
    let (_, dose) = op_t(model, table, z)?;
    Ok(dose.expect("decision boundaries always yield a dose"))
}
