use thiserror::Error;

/// Errors raised by the simulator and the bound evaluators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A call that the attack protocol forbids at this point of the run.
    #[error("protocol violation: {0}")]
    Protocol(String),
    /// An experiment configuration that fails validation.
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
