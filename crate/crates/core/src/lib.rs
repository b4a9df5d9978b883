//! Entropic learning of sign-indefinite network weights from nodal marginals.
//!
//! Given a nonnegative prior over edge (or hyperedge) weights, per-mode
//! {-1, 0, +1} sign templates, and target signed marginals, the solver finds
//! the relative-entropy projection of the prior onto the constraint set via
//! cyclic scaling updates with closed-form per-index roots.

pub mod diagnostics;
pub mod doc;
pub mod error;
pub mod hypergraph;
pub mod oracle;
pub mod problem;
pub mod solver;
pub mod tensor;

pub use diagnostics::{
    estimate_rate, residuals, validate_fixture, ConvergenceTrace, FixtureReport, RateEstimate,
    RateOutcome, ResidualNorm, TraceRow,
};
pub use error::{Error, Result};
pub use hypergraph::{
    adjacency_tensor, problem_from_hypergraph, uniformize, Hyperedge, Hypergraph, PriorRule,
    UniformizationResult,
};
pub use oracle::{brute_force_marginal_check, oracle_solve, OracleOptions};
pub use problem::{
    generate_feasible, partition, validate, BridgeProblem, GeneratedProblem, ModeMasks,
    SignPartition, SolveOptions, ValidationReport,
};
pub use solver::{
    classical_sinkhorn, dual_objective, kl_objective, mode_update, reconstruct_posterior,
    solve_generalized, solve_scaling_root, BridgeSolution, ScalingState, SolveStatus,
};
pub use tensor::{
    dense_from_sparse, elementwise_product, signed_marginal, sparse_from_dense, DenseTensor,
    SignTemplate, SparseEntry,
};
