use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field failed validation. `field` is a dotted path
    /// such as `params.c2`.
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("shifted-frequency budget exceeded: {0}")]
    Budget(String),

    #[error("step size underflow at t={t} for mode (k={k}, eta={eta})")]
    StepUnderflow { t: f64, k: i64, eta: f64 },

    #[error("numerical abort at t={t}: {detail}")]
    NumericalAbort { t: f64, detail: String },

    #[error("{0}")]
    Unsupported(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("under-determined fit: {0}")]
    Underdetermined(String),

    #[error("fit window too short: {0}")]
    WindowTooShort(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit status: 2 for bad input, 3 for a violated invariant,
    /// 4 for a numerical abort, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. }
            | Error::GridMismatch(_)
            | Error::Budget(_)
            | Error::Unsupported(_)
            | Error::Underdetermined(_)
            | Error::WindowTooShort(_)
            | Error::Parse(_) => 2,
            Error::Invariant(_) => 3,
            Error::StepUnderflow { .. } | Error::NumericalAbort { .. } => 4,
            Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
