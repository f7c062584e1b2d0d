use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MeshError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("matrix is singular: smallest singular value {min_singular:e}, largest {max_singular:e}")]
    Singular {
        min_singular: f64,
        max_singular: f64,
    },

    #[error("matrix is not unitary: ||U^H U - I||_F = {defect:e}")]
    NotUnitary { defect: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("objective returned a non-finite value ({value}) at the attached iterate")]
    NonFiniteObjective { value: f64, iterate: Vec<f64> },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl MeshError {
    pub(crate) fn shape(expected: impl Into<String>, found: impl Into<String>) -> Self {
        MeshError::Shape {
            expected: expected.into(),
            found: found.into(),
        }
    }
}
