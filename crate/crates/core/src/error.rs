use thiserror::Error;

/// Errors raised by the pricing engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("date index out of order: i = {i} > j = {j}")]
    Index { i: usize, j: usize },

    #[error("date index {index} outside the grid 0..={last}")]
    OutOfRange { index: usize, last: usize },

    #[error("window of {window} observations does not fit before date {index}")]
    WindowUnderflow { index: usize, window: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("shape mismatch: expected {expected} columns, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("basis has {columns} columns, above the cap of {cap}")]
    BasisTooLarge { columns: usize, cap: usize },

    #[error("signature order {order} above the cap of {cap}")]
    Order { order: usize, cap: usize },

    #[error("recurrent inputs must be supplied in chronological order")]
    Sequencing,

    #[error("product/policy mismatch: {0}")]
    Spec(String),

    #[error("binomial tree unstable: risk-neutral probability {0} outside (0, 1)")]
    Stability(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("pricing failed at node {node} (spot {spot}): {source}")]
    Node {
        node: usize,
        spot: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Failures of a computation that was correctly set up; a grid reports
    /// them per cell instead of aborting.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::Stability(_) | Error::Node { .. })
    }
}
