use thiserror::Error;

use crate::fields::GridGeometry;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid {height}x{width}: each axis needs at least two samples")]
    InvalidGeometry { height: usize, width: usize },

    #[error("array of length {len} does not fit a {geometry} grid")]
    ShapeMismatch { geometry: GridGeometry, len: usize },

    #[error("geometry mismatch: expected {expected}, found {found}")]
    GeometryMismatch {
        expected: GridGeometry,
        found: GridGeometry,
    },

    #[error("non-finite value in {what} at flat index {index}")]
    NonFinite { what: &'static str, index: usize },

    /// A field left the guarded range during shooting. `step` is the index
    /// of the state (0..=T) in which the offending value appeared.
    #[error("integration diverged at step {step}: {field} reached {value:e}")]
    Divergence {
        step: usize,
        field: &'static str,
        value: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
