//! Crate-wide error type.
//!
//! Every rejected input carries enough context to locate the offending
//! sample (grid index, time level, config line) without re-running.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid too coarse: axis {axis} has {cells} cells, need at least {required}")]
    GridTooCoarse {
        axis: usize,
        cells: usize,
        required: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid exponent p = {p}: {reason}")]
    InvalidExponent { p: f64, reason: String },

    #[error("non-finite value in {context} at time level {time_level}, space node {space_node}")]
    NonFinite {
        context: String,
        time_level: usize,
        space_node: usize,
    },

    #[error("density returned non-finite value at t = {t}, x = {x:?} (time level {time_level}, space node {space_node})")]
    NonFiniteDensity {
        t: f64,
        x: Vec<f64>,
        time_level: usize,
        space_node: usize,
    },

    #[error("coefficient not symmetric positive definite at t = {t}, x = {x:?}: {reason}")]
    CoefficientNotSpd { t: f64, x: Vec<f64>, reason: String },

    #[error("map is not monotone near s = {at}: values {left} and {right} out of order")]
    NotMonotone { at: f64, left: f64, right: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("step size violation: dt = {dt} exceeds stability bound {bound} ({scheme})")]
    StepSizeViolation { dt: f64, bound: f64, scheme: String },

    #[error("solver failure at time level {time_level}: {reason}")]
    SolverFailure { time_level: usize, reason: String },

    #[error("inner iteration stagnated at time level {time_level}: residual {residual} after {iters} iterations")]
    InnerStagnation {
        time_level: usize,
        iters: usize,
        residual: f64,
    },

    #[error("test function violates admissibility: {0}")]
    InadmissibleTestFunction(String),

    #[error("support box infeasible: grid axis {axis} has {cells} cells, bank generation needs at least {required}")]
    SupportInfeasible {
        axis: usize,
        cells: usize,
        required: usize,
    },

    #[error("interfaces too close: minimal spacing {spacing} must exceed {required} (= 6*sqrt(2)*eps)")]
    InterfacesTooClose { spacing: f64, required: f64 },

    #[error("epsilon list invalid: {0}")]
    InvalidEpsList(String),

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("unknown experiment id '{0}'")]
    UnknownExperiment(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("snapshot format error: {0}")]
    SnapshotFormat(String),

    #[error("manifest check failed for {path}: {reason}")]
    ManifestMismatch { path: String, reason: String },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
