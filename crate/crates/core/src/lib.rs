//! Secrecy-rate maximization for UAV-ground links.
//!
//! A UAV flying at fixed altitude talks to a ground node while a ground
//! eavesdropper at a known position listens. For both link directions
//! (UAV-to-ground and ground-to-UAV) this crate jointly optimizes the UAV
//! trajectory and the transmit power schedule by block coordinate descent:
//! closed-form power control alternates with a successive convex
//! approximation of the trajectory problem, each convex iterate being solved
//! by a banded log-barrier interior-point method.
//!
//! Module map:
//! - [`scenario`]: problem instances, trajectories, power profiles.
//! - [`channel`]: LoS rates, secrecy objectives, Monte Carlo fading.
//! - [`power_control`]: optimal per-slot power under average/peak budgets.
//! - [`convex_core`]: interior-point solver for the trajectory subproblems.
//! - [`trajectory_sca`]: surrogate construction, SCA steps, best-effort path.
//! - [`orchestrator`]: the joint algorithm and the three benchmark schemes.
//! - [`evaluation`]: sweeps, traces and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
pub mod channel;
pub mod convex_core;
pub mod error;
pub mod evaluation;
pub mod orchestrator;
pub mod power_control;
pub mod scenario;
pub mod trajectory_sca;

pub use error::{Error, Result};
pub use orchestrator::{Scheme, SolveOptions, SolveReport};
pub use scenario::{Direction, Point, PowerProfile, Scenario, Trajectory};
