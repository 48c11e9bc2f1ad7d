use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("vector is not a point of the probability simplex")]
    NotSimplex,

    #[error("invalid sparse vector: {0}")]
    InvalidVector(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kernel evaluation failed at pair ({i}, {j}): {source}")]
    GramEntry {
        i: usize,
        j: usize,
        source: Box<Error>,
    },

    #[error("invalid training set: {0}")]
    InvalidTrainSet(String),

    #[error(
        "SMO did not converge after {iterations} iterations \
         (KKT violation {violation:e}, {negative_curvature} non-positive-curvature pairs)"
    )]
    NotConverged {
        iterations: usize,
        violation: f64,
        negative_curvature: usize,
    },

    #[error("need at least 2 support vectors to fit neighbour scales, got {0}")]
    TooFewSupportVectors(usize),

    #[error("document {0} has no in-vocabulary terms")]
    EmptyDocument(String),

    #[error("class {label} has {count} members, fewer than the {folds} folds requested")]
    ClassTooSmall {
        label: i8,
        count: usize,
        folds: usize,
    },

    #[error("task has an empty class: {0}")]
    EmptyClass(String),

    #[error("finite-difference estimate unstable: {0}")]
    Unstable(String),

    #[error("{pass} pass: {source}")]
    Pass {
        pass: &'static str,
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
