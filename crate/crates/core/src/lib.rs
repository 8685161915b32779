//! MAP inference and bilevel weight learning for deep hinge-loss Markov
//! random fields.
//!
//! Inference compiles a [`GroundedModel`] into a regularized linearly
//! constrained quadratic program ([`CompiledLcqp`]) and minimizes its dual by
//! block coordinate descent ([`solver`]). Learning ([`learn`]) treats the
//! optimal inference value as a function of the weights and trains through a
//! smoothed value-function constraint.

pub mod error;
pub mod lcqp;
pub mod learn;
pub mod model;
pub mod neural;
pub mod oracle;
pub mod solver;
pub mod sparse;
pub mod synthetic;
pub mod value;

pub use error::{Error, Result};
pub use learn::{LearnConfig, LearnOutcome, Learner, LossKind, TrainingSample};
pub use lcqp::{CompiledLcqp, GapReport, Layout, RowKind};
pub use model::{
    GroundedModel, HardConstraint, HingePotential, Location, SparseCoeffs, TargetVector, Violation,
    DEFAULT_FEASIBILITY_TOL,
};
pub use neural::{DifferentiableHead, HeadKind};
pub use sparse::CsrMatrix;
pub use solver::{
    solve, solve_cc_parallel, solve_lock_free, solve_variant, Solution, SolveStats, SolveStatus,
    SolverConfig, StopMode, Variant,
};
pub use value::{value_function, value_of, InferenceConfig, ValueSolution};
