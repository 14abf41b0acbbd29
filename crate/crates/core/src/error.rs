use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure category, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema mismatch: expected {expected} predictors, found {found}")]
    SchemaMismatch { expected: usize, found: usize },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("class {0} has no training samples")]
    EmptyClass(String),

    #[error("class {label} has {count} samples; at least {needed} are required without shrinkage")]
    InsufficientSamples {
        label: String,
        count: usize,
        needed: usize,
    },

    #[error("at least two classes are required, found {0}")]
    TooFewClasses(usize),

    #[error("predictor {0} is constant in the training data")]
    ConstantPredictor(String),

    #[error("covariance of class {0} is singular even after regularization")]
    SingularCovariance(String),

    #[error("class index {index} out of range for {classes} classes")]
    ClassIndex { index: usize, classes: usize },

    #[error("every predictor is missing; nothing to condition on")]
    AllSignalsMissing,

    #[error("no predictor is missing; classify the observation directly")]
    NoSignalsMissing,

    #[error("predictor index {index} is invalid for dimension {dimension}")]
    InvalidIndex { index: usize, dimension: usize },

    #[error("predictor index {0} listed more than once")]
    DuplicateIndex(usize),

    #[error("invalid bounds for variable {index}: [{lower}, {upper}]")]
    InvalidBounds { index: usize, lower: f64, upper: f64 },

    #[error("quadratic term is not positive definite")]
    NonPositiveDefinite,

    #[error("box QP did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("recovery failed for class {class}: {source}")]
    ClassSolve {
        class: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("validation set is empty")]
    EmptyValidation,

    #[error("class {0} has no positives or no negatives in the test set")]
    DegenerateClass(String),

    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("feeder admits no valid topology")]
    NoValidTopology,

    #[error("load {0} is disconnected without an open protective device")]
    DisconnectedLoadWithoutPd(String),

    #[error("invalid feeder field {field}: {message}")]
    InvalidFeeder { field: String, message: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io(_) => ErrorKind::Io,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => ErrorKind::Io,
            Error::NonPositiveDefinite | Error::NoConvergence { .. } => ErrorKind::Numerical,
            Error::ClassSolve { source, .. } => source.kind(),
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn feeder(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidFeeder {
            field: field.into(),
            message: message.into(),
        }
    }
}
