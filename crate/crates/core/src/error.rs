use thiserror::Error;

/// Errors raised by model construction, polynomial algebra and identification.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix `{name}` is {rows}x{cols}, expected a square matrix")]
    NotSquare {
        name: String,
        rows: usize,
        cols: usize,
    },

    #[error("matrix `{name}` row {row} sums to {sum}, expected 1")]
    NotStochastic { name: String, row: usize, sum: f64 },

    #[error("matrix `{name}` has negative entry {value} at ({row}, {col})")]
    NegativeEntry {
        name: String,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("probability {value} at action {action}, state {state} is outside (0, 1)")]
    ProbabilityOutOfRange {
        action: usize,
        state: usize,
        value: f64,
    },

    #[error("choice probabilities at state {state} sum to {sum}, expected 1")]
    ProbabilitiesDoNotSumToOne { state: usize, sum: f64 },

    #[error("discount factor {0} is outside [0, 1)")]
    InvalidDiscount(f64),

    #[error("polynomial is identically zero; it carries no information about beta")]
    Uninformative,

    #[error("every identifying polynomial is identically zero")]
    NoIdentifyingContent,

    #[error("{what} failed to converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("{context}: numerical rank {rank}, expected {expected}")]
    RankDeficient {
        context: String,
        rank: usize,
        expected: usize,
    },

    #[error("{0} is singular")]
    Singular(String),

    #[error("state grid has no point at {axis} = {value}")]
    MissingGridPoint { axis: String, value: f64 },

    #[error("index {index} on axis `{axis}` is out of range 0..{len}")]
    IndexOutOfRange {
        axis: String,
        index: usize,
        len: usize,
    },

    #[error("no pair satisfies the finite dependence condition up to horizon {0}")]
    NotFinitelyDependent(usize),

    #[error("log-difference restriction has an empty domain: some payoff combination is nonpositive on all of [0, 1)")]
    EmptyLogDomain,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
