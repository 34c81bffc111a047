use std::fmt;

/// Errors produced by formula handling, restriction machinery and the
/// decision-tree constructions.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Formula text did not match the grammar. `pos` is a byte offset.
    Parse { pos: usize, message: String },
    VarOutOfRange { var: usize, n_vars: usize },
    EmptyGate,
    TooManyVars { n_vars: usize, max: usize },
    /// Two restrictions disagree on `var`.
    Inconsistent { var: usize },
    InvalidRestrictionTree(String),
    InvalidTree(String),
    /// Ordered restrictions with different variable sequences were compared.
    DomainMismatch,
    BudgetExceeded { budget: usize },
    InvalidParameter(String),
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parse { pos, message } => write!(f, "parse error at {pos}: {message}"),
            Error::VarOutOfRange { var, n_vars } => {
                write!(f, "variable x{var} out of range 1..={n_vars}")
            }
            Error::EmptyGate => write!(f, "gate with no children"),
            Error::TooManyVars { n_vars, max } => {
                write!(f, "{n_vars} variables requested, at most {max} supported")
            }
            Error::Inconsistent { var } => write!(f, "restrictions disagree on x{var}"),
            Error::InvalidRestrictionTree(m) => write!(f, "invalid restriction tree: {m}"),
            Error::InvalidTree(m) => write!(f, "invalid decision tree: {m}"),
            Error::DomainMismatch => {
                write!(f, "ordered restrictions do not share a variable sequence")
            }
            Error::BudgetExceeded { budget } => {
                write!(f, "decision tree node budget of {budget} exceeded")
            }
            Error::InvalidParameter(m) => write!(f, "invalid parameter: {m}"),
            Error::Precondition(m) => write!(f, "precondition violated: {m}"),
        }
    }
}

impl std::error::Error for Error {}
