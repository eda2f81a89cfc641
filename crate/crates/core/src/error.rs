use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-positive measure: {0}")]
    NonPositiveMeasure(String),
    #[error("self-loop at vertex '{0}'")]
    SelfLoop(String),
    #[error("duplicate edge between '{0}' and '{1}'")]
    DuplicateEdge(String, String),
    #[error("duplicate vertex id '{0}'")]
    DuplicateVertex(String),
    #[error("graph is disconnected: vertex '{0}' is unreachable from '{1}'")]
    Disconnected(String, String),
    #[error("graph has no vertices")]
    EmptyGraph,
    #[error("edge references unknown vertex '{0}'")]
    UnknownVertexInEdge(String),
    #[error("vertex function has {got} values, graph has {expected} vertices")]
    DomainMismatch { expected: usize, got: usize },
    #[error("non-finite value at vertex index {0}")]
    NonFinite(usize),
    #[error("unsupported exponent: {0}")]
    UnsupportedExponent(String),
    #[error("negative value {value} at vertex index {index}")]
    NegativeInput { index: usize, value: f64 },
    #[error("function is identically zero")]
    ZeroFunction,
    #[error("cannot retract onto the constraint set: {0}")]
    RetractInfeasible(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("no convergence after {iterations} iterations (best residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("infeasible problem: {0}")]
    InfeasibleProblem(String),
    #[error("degenerate scaling: q equals p")]
    DegenerateScaling,
    #[error("multiplier must be positive for rescaling, got {0}")]
    NonPositiveMultiplier(f64),
    #[error("rescale mode needs a negative lambda, got {0}")]
    BadLambdaSign(f64),
    #[error("oracle supports at most 4 vertices, got {0}")]
    TooLarge(usize),
    #[error("invalid solve options: {0}")]
    InvalidOptions(String),
}

pub type Result<T> = std::result::Result<T, Error>;
