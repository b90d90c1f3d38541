//! Crate-wide error type.

use std::path::PathBuf;

/// Coarse classification used by callers (e.g. the CLI) to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad input data: parse failures, invalid geometry, dimension mismatches.
    Data,
    /// Numerical failure: singular systems, lost coverage, divergence.
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("face index out of range: face {face} references vertex {index} but there are only {vertex_count} vertices")]
    FaceIndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },

    #[error("degenerate face {face}: indices {indices:?} are not distinct")]
    DegenerateFace { face: usize, indices: [u32; 3] },

    #[error("empty geometry: {0}")]
    EmptyGeometry(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("labels missing or wrong length: {0}")]
    Labels(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("singular moment matrix: sigma_min = {sigma_min:.3e} with {support} supporting nodes")]
    SingularMoment { sigma_min: f64, support: usize },

    #[error("evaluation point coincides with node {node} (distance {distance:.3e})")]
    NodeCoincidence { node: usize, distance: f64 },

    #[error("{count} evaluation points are not covered (first few: {first:?})")]
    Uncovered { count: usize, first: Vec<usize> },

    #[error("coverage impossible with the given candidates/radius: {uncovered} surface points remain uncovered (first few: {first:?})")]
    CoverageFailure { uncovered: usize, first: Vec<usize> },

    #[error("factorization failed: {message} (condition estimate {condition:.3e})")]
    Factorization { message: String, condition: f64 },

    #[error("optimization diverged at step {step}: energy {energy:.3e} ({} earlier steps recorded)", trace.len())]
    Divergence {
        step: usize,
        energy: f64,
        /// Per-step totals recorded before the blow-up.
        trace: Vec<f64>,
    },

    #[error("missing input for mode {mode}: {part}")]
    MissingPart {
        mode: &'static str,
        part: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// Which broad class this error falls into.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::SingularMoment { .. }
            | Error::NodeCoincidence { .. }
            | Error::Uncovered { .. }
            | Error::CoverageFailure { .. }
            | Error::Factorization { .. }
            | Error::Divergence { .. } => ErrorCategory::Numerical,
            _ => ErrorCategory::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
