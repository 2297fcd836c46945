//! Policy evaluation: the stationary distribution of the uniformized chain,
//! discrete-event simulation, and exhaustive search for tiny boxes.

mod oracle;
mod simulate;
mod stationary;

use thiserror::Error;

pub use oracle::{brute_force_optimal, policy_count, OracleResult, ENUMERATION_CAP};
pub use simulate::{simulate, SimEstimate, SimOptions};
pub use stationary::{average_cost, policy_chain, stationary_distribution, PolicyChain, StationaryDistribution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("stationary iteration did not converge in {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    /// There are `per_state^states` policies.
    #[error("exhaustive search over {per_state}^{states} policies (about 1e{log10:.1}) exceeds the cap of {cap}", log10 = (*states as f64) * (*per_state as f64).log10())]
    TooLarge { per_state: usize, states: usize, cap: u128 },
    #[error("invalid simulation request: {0}")]
    InvalidSimulation(String),
    #[error("policy covers a {got:?} box but the evaluation box is {want:?}")]
    BoxMismatch { got: (usize, usize), want: (usize, usize) },
}
