use thiserror::Error;

/// Errors produced by the coding, construction and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("coefficient entry {value} out of range [0, {modulus})")]
    CoeffOutOfRange { value: i64, modulus: u64 },

    #[error("dither places a coset representative on a Voronoi boundary (index {index}); pick a different dither")]
    DitherBoundary { index: usize },

    #[error("degenerate evidence: conditioning produced an all-zero PMF")]
    DegenerateEvidence,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
