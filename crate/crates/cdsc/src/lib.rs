//! Constrained dominant-set clustering and multi-camera track association.
//!
//! The core primitive is a parametrized quadratic program over the simplex
//! whose local maximizers are cluster membership distributions guaranteed to
//! intersect a user-chosen constraint set. On top of it sit cluster
//! enumeration, affinity construction (appearance, motion, spatio-temporal
//! gating), a three-layer detection-to-trajectory tracking pipeline with
//! track refinement, identity-level evaluation metrics, and a deterministic
//! synthetic scenario generator.

pub mod affinity;
pub mod enumeration;
pub mod error;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod simplex;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use graph::AffinityMatrix;
pub use simplex::SimplexVector;
pub use solver::{
    alpha_bound, dominant_distribution, fast_cdsc, kkt_residual, local_maximizer, objective,
    replicator_step, solve_replicator, AlphaMode, ConstraintSpec, SolveReport, SolverConfig,
};
