use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented constraint.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The design matrix is rank-deficient; `column` is the first column the
    /// pivoted QR could not separate from the span of the preceding ones.
    #[error("ill-conditioned design: column `{column}` is collinear with earlier columns")]
    IllConditioned { column: String },

    /// After demeaning, the regressor of interest has no remaining variation.
    #[error("no within variation: messages_received is constant after demeaning")]
    NoWithinVariation,

    /// Too few observations (or too little variance) to estimate anything.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A ratio whose denominator is zero by construction of the inputs.
    #[error("degenerate division: {0}")]
    DivisionDegenerate(String),

    /// Filtering removed every record.
    #[error("empty selection: {0}")]
    EmptySelection(String),

    /// Input data is inconsistent with the rest of the pipeline state.
    #[error("inconsistent input: {0}")]
    InconsistentInput(String),

    /// A CSV line failed to parse. Lines are 1-based and include the header.
    #[error("csv parse error at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn csv(line: usize, message: impl Into<String>) -> Self {
        Error::Csv {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
