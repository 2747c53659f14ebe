//! Expert solvers behind the registry's built-in models.
//!
//! * [`bandwidth`]: proportional-fair bandwidth split and the equal-split baseline.
//! * [`power`]: multi-cell downlink power control (max-min SINR, max-product
//!   SINR, uniform power) over a shared interference model.
//! * [`waterfill`]: single-cell water-filling over parallel channels.
//! * [`metrics`]: fairness and aggregate metrics used in reports.
//!
//! Every solver is a pure function of its problem and tolerance.

pub mod bandwidth;
pub mod metrics;
pub mod power;
pub mod waterfill;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub use bandwidth::{
    marginal_utility, pf_utility, solve_bandwidth_equal, solve_bandwidth_pf, user_rate,
    BandwidthProblem, PF_DEFAULT_TOL,
};
pub use metrics::{geometric_mean, jain_index, min_value};
pub use power::{
    log_sinr_gradient, log_sinr_objective, min_power_for_target, projected_gradient_norm, sinr_all,
    solve_power_maxmin, solve_power_maxprod, solve_power_uniform, PowerProblem,
    MAXMIN_DEFAULT_TOL, MAXPROD_DEFAULT_TOL,
};
pub use waterfill::{solve_waterfilling, WATERFILL_DEFAULT_TOL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("{solver} did not converge after {iterations} iterations: {detail}")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        detail: String,
        diagnostics: BTreeMap<String, f64>,
    },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("infeasible input: {0}")]
    InfeasibleInput(String),
    #[error("all entries are zero")]
    AllZero,
}

pub type Result<T> = std::result::Result<T, SolverError>;

/// Per-UE allocation (bandwidth units or power units) plus solver diagnostics.
///
/// For power problems `values` is row-major over (cell, user).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub values: Vec<f64>,
    pub objective_value: f64,
    pub diagnostics: BTreeMap<String, f64>,
}

impl Allocation {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}
