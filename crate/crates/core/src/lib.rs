//! Optimal service-resource allocation for a controllable two-node tandem
//! queue under the long-run average cost criterion.
//!
//! - [`model`]: validated rates, costs and action grids.
//! - [`dp`]: uniformized event operators and relative value iteration.
//! - [`eval`]: exact, simulated and brute-force policy evaluation.
//! - [`structure`]: numerical checks of structural properties of solutions.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`, which is what the command-line tool uses.

pub mod dp;
pub mod eval;
pub mod model;
pub mod scalar;
pub mod structure;

pub use dp::{Policy, PolicyTable, SolverOptions, TruncationSpec};
pub use model::{ModelError, Node, State};
pub use scalar::Scalar;

pub type Model = model::TandemModel<f64>;
pub type Config = model::ModelConfig<f64>;
pub type NodeTables = model::NodeSpec<f64>;
pub type Solution = dp::Solution<f64>;
pub type ValueFunction = dp::ValueFunction<f64>;
pub type Options = dp::SolverOptions<f64>;
pub type Chain = eval::PolicyChain<f64>;
pub type Stationary = eval::StationaryDistribution<f64>;

pub type Model32 = model::TandemModel<f32>;
pub type Solution32 = dp::Solution<f32>;
pub type Options32 = dp::SolverOptions<f32>;
