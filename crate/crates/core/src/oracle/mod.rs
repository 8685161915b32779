//! Reference solvers used to check the dual solver: exact active-set
//! enumeration for tiny problems and a projected subgradient baseline.

mod active_set;
mod subgradient;

pub use active_set::{active_set_oracle, OracleLimits, OracleSolution};
pub use subgradient::{
    projected_subgradient, projected_subgradient_sweep, SubgradientConfig, SubgradientResult, STEP_GRID,
};
