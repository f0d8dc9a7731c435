//! Crate-wide error type.
//!
//! Every fallible public operation returns [`Result`]. Variants are grouped by
//! the phase that detects the problem: ingestion (reading external data),
//! validation (structural checks on trees, shapes, and configs), and
//! execution (caps, I/O).

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// External data was rejected at ingestion (NaN, +∞ for real fields, bad
    /// dtype, ragged rows, …). The message names the offending value or field.
    #[error("ingestion: {0}")]
    Ingestion(String),

    /// A corner tree failed validation. The message names the vertex index.
    #[error("invalid tree: {0}")]
    InvalidTree(String),

    /// A JSON document did not match the expected schema. `pointer` is a JSON
    /// pointer to the offending element.
    #[error("schema violation at {pointer}: {message}")]
    Schema { pointer: String, message: String },

    /// Mismatched tensor/field shapes or channel counts.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Brute-force enumeration would visit more placements than the cap.
    #[error("enumeration cap exceeded: {placements} placements > cap {cap}")]
    CapExceeded { placements: u128, cap: u128 },

    /// An operation was asked to run under a semiring it does not support,
    /// or its operands carry different semiring tags.
    #[error("semiring: {0}")]
    Semiring(String),

    /// Invalid configuration (CLI flags, layer configs, bad enum values).
    #[error("config: {0}")]
    Config(String),

    /// Filesystem failure, annotated with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
