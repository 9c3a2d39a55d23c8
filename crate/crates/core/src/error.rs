use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A parameter violates its documented range.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    /// An operation was called outside its precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A ratio whose denominator is zero.
    #[error("division by zero: {0}")]
    Domain(&'static str),

    #[error("auction did not settle within {cap} rounds")]
    RoundCap { cap: usize },
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config { field, reason: reason.into() }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
