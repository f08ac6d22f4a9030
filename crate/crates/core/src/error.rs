use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("input outside the model domain: {0}")]
    InputDomain(String),

    /// Every importance weight vanished; carries the intermediary step (t, s)
    /// at which the collapse happened.
    #[error("filter collapse: all particle weights are zero at t={time}, s={substep}")]
    FilterCollapse { time: usize, substep: usize },

    #[error("total weight degeneracy: every log-weight is -inf")]
    TotalDegeneracy,

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("AUC is undefined: {0}")]
    UndefinedAuc(String),

    #[error("non-finite score at iteration {iteration}; trace so far:\n{diagnostics}")]
    NonFiniteScore {
        iteration: usize,
        diagnostics: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported manifest schema version {found} (this build reads {expected})")]
    ManifestVersion { found: u32, expected: u32 },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
