use std::io::Write;

use super::trajectory::TrajectoryRecord;
use crate::error::{Error, Result};

/// Write a trajectory as comma-separated rows
/// `theta_day,p,r,gamma,n,sigma,event`.
///
/// Path samples have an empty `event`; each event adds a row with the state
/// just before the jump, placed after the samples at or before its time.
pub fn write_trajectory<W: Write>(traj: &TrajectoryRecord, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| Error::invalid(format!("trajectory export failed: {e}"));
    w.write_record(["theta_day", "p", "r", "gamma", "n", "sigma", "event"])
        .map_err(fail)?;
    let mut events = traj.events.iter().peekable();
    for s in &traj.path {
        while let Some(e) = events.next_if(|e| e.theta < s.theta - 1e-9) {
            let x = &e.state;
            w.serialize((e.theta, x.p, x.r, x.gamma, x.n, x.sigma, e.kind.to_string()))
                .map_err(fail)?;
        }
        w.serialize((s.theta, s.p, s.r, s.gamma, s.n, s.sigma, ""))
            .map_err(fail)?;
    }
    for e in events {
        let x = &e.state;
        w.serialize((e.theta, x.p, x.r, x.gamma, x.n, x.sigma, e.kind.to_string()))
            .map_err(fail)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("trajectory export failed: {e}")))
}
