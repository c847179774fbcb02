use thiserror::Error;

/// Errors surfaced by tree construction, sampling and reconstruction.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tree too large for exact computation: {leaves} leaves (limit {limit})")]
    TooLarge { leaves: usize, limit: usize },

    #[error("partial metric is inconsistent: leaf sets for {a} and {b} at level {level} overlap without nesting")]
    InconsistentMetric { a: usize, b: usize, level: usize },

    #[error("no b-ary descendant set of size {wanted} below pseudo-vertex {vertex} at level {level}")]
    LiftingFailed {
        vertex: usize,
        level: usize,
        wanted: usize,
    },

    #[error("leaf {leaf} is not covered by the pseudo-leaf labeling")]
    UncoveredLeaf { leaf: usize },

    #[error("level search exhausted at cutoff {cutoff}: b*theta_min^2 is at or below g^2")]
    LevelCutoff { cutoff: usize },

    #[error("gain estimate is not positive ({value}): parameters too close to the threshold for level {ell}")]
    NonPositiveGain { value: f64, ell: usize },

    #[error("distance recovery failed for leaf pair ({u}, {v}): {reason}")]
    RecoveryFailed { u: usize, v: usize, reason: String },

    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
