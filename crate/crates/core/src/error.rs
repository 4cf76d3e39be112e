use thiserror::Error;

/// Errors raised by fitting, factor derivation, evaluation and file IO.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid grid, simulation or fit configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// The operation was called with the wrong kind of model or table.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("singular design: column(s) {} are collinear with preceding columns", .columns.join(", "))]
    Singular { columns: Vec<String> },

    #[error("no correction factor for {session} bin {bin} (no training records)")]
    MissingFactor { session: String, bin: usize },

    #[error("factor pole for {session} bin {bin}: fitted denominator {denominator} is not positive")]
    Pole {
        session: String,
        bin: usize,
        denominator: f64,
    },

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("model file: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
