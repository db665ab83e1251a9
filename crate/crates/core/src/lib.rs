//! Optimal scheduling of IL-7 injection cycles for HIV patients, posed as an
//! impulse-control problem on a piecewise deterministic Markov process.
//!
//! - [`model`]: the controlled process (flow, boundary, kernel, costs).
//! - [`solver`]: value iteration on a state-space grid.
//! - [`sim`]: policies, controlled trajectories and Monte Carlo evaluation.
//! - [`run`]: run configuration files, config hashing and comparison tables.

pub mod error;
pub mod model;
pub mod run;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use model::{BoundaryId, Model, ModelConfig, PatientParams, State};
