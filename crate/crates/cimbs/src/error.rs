use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("node index {index} out of range (n = {n}) at line {line}")]
    NodeRange { line: usize, index: usize, n: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("operation requires an independent-activation strategy model")]
    UnsupportedModel,

    #[error("enumeration bound exceeded: {0}")]
    EnumerationBound(String),

    #[error("resource cap exceeded: {what} requires {required} but the cap is {cap}")]
    Resource {
        what: &'static str,
        required: u64,
        cap: u64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
