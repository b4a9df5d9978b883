use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("mode {mode} out of range for order-{order} tensor")]
    Mode { mode: usize, order: usize },

    #[error("duplicate sparse entry at index {idx:?}")]
    DuplicateEntry { idx: Vec<usize> },

    #[error("sign value {value} outside {{-1, 0, +1}}")]
    SignDomain { value: i64 },

    #[error(
        "no positive root for a*x - b/x = c with a={a}, b={b}, c={c}{}",
        location.map(|(m, i)| format!(" (mode {m}, index {i})")).unwrap_or_default()
    )]
    RootDomain {
        a: f64,
        b: f64,
        c: f64,
        location: Option<(usize, usize)>,
    },

    #[error("structurally infeasible: {0}")]
    InfeasibleStructure(String),

    #[error("posterior has mass outside the prior support at index {idx:?}")]
    AbsoluteContinuity { idx: Vec<usize> },

    #[error("failed to draw a non-degenerate instance after {attempts} attempts")]
    Generation { attempts: usize },

    #[error("hypergraph is not {expected}-uniform: hyperedge {edge} has cardinality {found}")]
    Uniformity {
        expected: usize,
        edge: usize,
        found: usize,
    },

    #[error("invalid hypergraph: {0}")]
    Hypergraph(String),

    #[error("oracle failed to converge within {steps} steps (gradient inf-norm {gradient_inf})")]
    OracleFailed { steps: usize, gradient_inf: f64 },

    #[error("trace has too few rows for mode {mode}: need at least {need}, found {found}")]
    TraceTooShort {
        mode: usize,
        need: usize,
        found: usize,
    },

    #[error("invalid document: {0}")]
    Document(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

pub type Result<T> = std::result::Result<T, Error>;
