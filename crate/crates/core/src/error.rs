//! Crate-wide error type.

use alloc::string::String;

/// Errors reported by validated public operations.
///
/// Internal tape plumbing panics on programmer misuse (shape mismatches in
/// graph construction); everything reachable from user input returns one of
/// these instead.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A configuration value is out of its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// An input value violates an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A mathematically undefined case, e.g. KL against a zero bin.
    #[error("domain error: {0}")]
    Domain(String),
    /// Training produced a non-finite loss.
    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: u64, detail: String },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub fn invalid_parameter(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
