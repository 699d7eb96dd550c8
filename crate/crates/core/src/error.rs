use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("IdMismatch: ids differ at position {position} ({detail})")]
    IdMismatch { position: usize, detail: String },

    #[error("InvalidInput: {0}")]
    InvalidInput(String),

    #[error("CalibrationFailed: row {row} did not reach the target entropy (last deviation {deviation:e} bits)")]
    CalibrationFailed { row: usize, deviation: f64 },

    #[error("NonFinite: t-SNE coordinates diverged at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("DegenerateInput: {distinct} distinct points cannot form {k} clusters")]
    DegenerateInput { k: usize, distinct: usize },

    #[error("InvalidLabels: {0}")]
    InvalidLabels(String),

    #[error("EmptyCluster")]
    EmptyCluster,

    #[error("InfeasibleBudget: remainder {remainder} exceeds the {capacity} non-medoid members available")]
    InfeasibleBudget { remainder: usize, capacity: usize },

    #[error("BudgetExceedsCluster: requested {requested}, only {available} unselected members")]
    BudgetExceedsCluster { requested: usize, available: usize },

    #[error("BudgetExceedsPool: requested {requested}, pool has {available}")]
    BudgetExceedsPool { requested: usize, available: usize },

    #[error("EmptySelectedSet")]
    EmptySelectedSet,

    #[error("EmptySelection")]
    EmptySelection,

    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),

    #[error("EmptyMask: class {class} is absent from the {which} mask")]
    EmptyMask { class: u16, which: &'static str },

    #[error("BadMagic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("TruncatedFile: {field} needs {expected} bytes, {available} available")]
    TruncatedFile {
        field: &'static str,
        expected: usize,
        available: usize,
    },

    #[error("CountMismatch: {field} is {found}, expected {expected}")]
    CountMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("NotNormalized: pixel {pixel} sums to {sum} (deviation {deviation:e})")]
    NotNormalized {
        pixel: usize,
        sum: f64,
        deviation: f64,
    },

    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),

    #[error("JsonError: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable variant name, used by the CLI when reporting data errors.
    pub fn name(&self) -> &'static str {
        match self {
            Error::IdMismatch { .. } => "IdMismatch",
            Error::InvalidInput(_) => "InvalidInput",
            Error::CalibrationFailed { .. } => "CalibrationFailed",
            Error::NonFinite { .. } => "NonFinite",
            Error::DegenerateInput { .. } => "DegenerateInput",
            Error::InvalidLabels(_) => "InvalidLabels",
            Error::EmptyCluster => "EmptyCluster",
            Error::InfeasibleBudget { .. } => "InfeasibleBudget",
            Error::BudgetExceedsCluster { .. } => "BudgetExceedsCluster",
            Error::BudgetExceedsPool { .. } => "BudgetExceedsPool",
            Error::EmptySelectedSet => "EmptySelectedSet",
            Error::EmptySelection => "EmptySelection",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::EmptyMask { .. } => "EmptyMask",
            Error::BadMagic { .. } => "BadMagic",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::CountMismatch { .. } => "CountMismatch",
            Error::NotNormalized { .. } => "NotNormalized",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}
