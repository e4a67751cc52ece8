//! Sum-rate maximizing multigroup multicast beamforming under per-antenna
//! power constraints.
//!
//! The solver alternates two stages. A semidefinite relaxation of the
//! per-antenna QoS power-minimization problem, followed by Gaussian
//! randomization, fixes beam directions that meet the current per-group
//! SINR targets with the least per-antenna utilization. A projected
//! sub-gradient step on the logarithmic group powers then reallocates power
//! towards well-conditioned groups, possibly shutting others down.
//!
//! Modules, bottom-up:
//! - [`model`]: channels, groups, limits, run parameters, generators.
//! - [`metrics`]: SINR, sum rate, antenna powers, beam patterns.
//! - [`conic`]: SDP/LP/QP description and an interior-point solver.
//! - [`sdr`]: relaxed QoS problem, randomization, power-control LP.
//! - [`power`]: direction/power decoupling, sub-gradient, PAC projection.
//! - [`algorithms`]: max sum rate (PAC and SPC), max-min fair, rescaling.
//! - [`harness`]: experiment specs, Monte Carlo runs, CSV/JSON output.

pub mod algorithms;
pub mod conic;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod power;
pub mod sdr;

pub use error::{Error, Result};
