use thiserror::Error;

/// Errors raised by the library. Variants map one-to-one onto the failure
/// modes of the individual operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("malformed linear program: {0}")]
    MalformedProblem(String),

    #[error("simplex did not terminate: {0}")]
    NumericalFailure(String),

    #[error("cannot parse model: {0}")]
    Parse(String),

    #[error("model validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("node {0} is terminal and has no children")]
    NotAParent(u64),

    #[error("unknown node id {0}")]
    UnknownNode(u64),

    #[error("invalid risk measure: {0}")]
    InvalidSpec(String),

    #[error("acceptance cone at node {node} admits no supporting probability vector")]
    ConeEmptyDual { node: u64 },

    #[error("{count} dual measures exceed the configured cap of {cap}")]
    CombinatorialLimit { count: u128, cap: u128 },

    #[error("payoff maturity {found} does not match horizon {expected}")]
    MaturityMismatch { expected: usize, found: usize },

    #[error("the NA condition fails; dual quantities are undefined")]
    NoNa,
}

pub type Result<T> = std::result::Result<T, Error>;
