use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or argument lies outside the domain of the model.
    #[error("{field}: {reason}")]
    Domain { field: String, reason: String },

    #[error("recursion did not converge within {slots} slots (residual {residual:.3} devices)")]
    NonConvergence { slots: usize, residual: f64 },

    #[error("trace is empty")]
    EmptyTrace,

    #[error("trace has zero total attempts")]
    ZeroAttempts,

    #[error("simulation with seed {seed} hit the slot cap of {slots} with {pending} devices pending")]
    SlotCapReached { seed: u64, slots: u64, pending: u32 },

    #[error("table is empty")]
    EmptyTable,

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Domain {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

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
