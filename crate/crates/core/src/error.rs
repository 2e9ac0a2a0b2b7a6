use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
///
/// Variants are grouped so that the CLI can map them onto exit codes:
/// infeasible problems, I/O failures and everything else that is a
/// validation failure of some input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("chromosome has {actual} genes, expected {expected}")]
    GeneCount { expected: usize, actual: usize },

    #[error("gene {gene} at layer {layer} is out of range (must be < {candidates})")]
    GeneOutOfRange {
        layer: usize,
        gene: usize,
        candidates: usize,
    },

    #[error("layer {layer} is out of range (table has {layers} layers)")]
    LayerOutOfRange { layer: usize, layers: usize },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("constraint ceiling must be positive")]
    NonPositiveCeiling,

    #[error("table dimensions {layers}x{candidates} do not match expected {expected_layers}x{expected_candidates}")]
    DimensionMismatch {
        layers: usize,
        candidates: usize,
        expected_layers: usize,
        expected_candidates: usize,
    },

    #[error("table entry ({layer}, {candidate}) = {value} is outside [0, 1]")]
    EntryOutOfRange {
        layer: usize,
        candidate: usize,
        value: f64,
    },

    #[error("loss entry ({layer}, {candidate}) = {value} is outside [0, 1]")]
    LossOutOfRange {
        layer: usize,
        candidate: usize,
        value: f64,
    },

    #[error("evaluator returned {value} for layer {layer}, candidate {candidate}; expected a value in [0, 1]")]
    EvaluatorOutOfRange {
        layer: usize,
        candidate: usize,
        value: f64,
    },

    #[error("malformed {what}: {reason}")]
    Malformed { what: &'static str, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no architecture satisfies the constraint: cheapest achievable {metric} is {cheapest}, ceiling is {ceiling}")]
    Infeasible {
        metric: &'static str,
        cheapest: u64,
        ceiling: u64,
    },

    #[error("search space of {size} chromosomes exceeds the exhaustive limit of {limit}")]
    SpaceTooLarge { size: u128, limit: u128 },

    #[error("correlation is undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("{path}: {source}")]
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

    pub(crate) fn malformed(what: &'static str, reason: impl ToString) -> Self {
        Error::Malformed {
            what,
            reason: reason.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
