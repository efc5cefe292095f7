use alloc::string::String;

/// Failures raised by tensor operators, graph traversal and model plumbing.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("corrupted state: {0}")]
    CorruptedState(String),
    #[error("corrupted graph: {0}")]
    CorruptedGraph(String),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
