use alloc::string::String;

/// Errors raised by the engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Shapes or layer parameters that do not compose.
    #[error("structural error: {0}")]
    Structural(String),
    /// A chromosome that cannot be mapped onto a network.
    #[error("codec error at gene {gene}: {message}")]
    Codec { gene: usize, message: String },
    /// A precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),
    /// An invalid configuration value.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: &'static str, message: String },
    /// Dataset content that violates the dataset invariants.
    #[error("data error: {0}")]
    Data(String),
    /// Evaluating a population member failed.
    #[error("evaluation of member {member} failed: {source}")]
    Evaluation {
        member: u64,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! structural {
    ($($arg:tt)*) => { $crate::Error::Structural(alloc::format!($($arg)*)) };
}
macro_rules! contract {
    ($($arg:tt)*) => { $crate::Error::Contract(alloc::format!($($arg)*)) };
}
pub(crate) use {contract, structural};
