use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("alphabet `{0}` must contain at least one symbol")]
    EmptyAlphabet(String),

    #[error("entry {index} is {value}; probabilities must be finite and non-negative")]
    InvalidEntry { index: usize, value: f64 },

    #[error("{}probabilities sum to {sum}, expected 1 within 1e-12", row_prefix(*.row))]
    NotNormalized { row: Option<usize>, sum: f64 },

    #[error("expected {expected} entries, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("unknown axis `{0}`")]
    UnknownAxis(String),

    #[error("axis label `{0}` appears more than once")]
    DuplicateAxis(String),

    #[error("distributions are defined over different axes")]
    AxisMismatch,

    #[error("conditioning point has zero probability")]
    ZeroProbabilityCondition,

    #[error("{what}: {requested} exceeds the limit of {limit}")]
    GuardExceeded {
        what: &'static str,
        requested: f64,
        limit: f64,
    },

    #[error("{name} = {value} is outside its admissible range")]
    OutOfDomain { name: &'static str, value: f64 },

    #[error("no bin member has positive decoding weight")]
    EmptyBin,

    #[error("bisection failed to bracket a root on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("error budget {budget} does not exceed the finite-length slack {slack}")]
    SlackExhausted { budget: f64, slack: f64 },

    #[error("covariance matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("dimension {0} is not supported")]
    UnsupportedDimension(usize),

    #[error("variance must be positive")]
    ZeroVariance,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn row_prefix(row: Option<usize>) -> String {
    match row {
        Some(r) => format!("row {r}: "),
        None => String::new(),
    }
}
