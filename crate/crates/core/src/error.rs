use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpocError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular schedule: alpha_{index} = 1 makes the product-form weights undefined; use the recursive measure update instead")]
    SingularSchedule { index: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("problem size {entries} exceeds the cap of {cap} cost entries; use sliced_w2 for large instances")]
    SizeCap { entries: usize, cap: usize },

    #[error("model evaluation produced a non-finite value at t = {t}, x = {x:?}")]
    ModelEvaluation { t: f64, x: Vec<f64> },

    #[error("blow-up in replication {replication}, particle {particle}, step {step}: |X| = {magnitude:e}")]
    BlowUp {
        replication: u64,
        particle: usize,
        step: usize,
        magnitude: f64,
    },

    #[error("replication {replication}, particle {particle}, step {step}: {source}")]
    InRun {
        replication: u64,
        particle: usize,
        step: usize,
        source: Box<SpocError>,
    },

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SpocError {
    /// True for failures caused by the dynamics (blow-up or non-finite
    /// coefficients) rather than by input or I/O.
    pub fn is_numeric_blowup(&self) -> bool {
        match self {
            SpocError::BlowUp { .. } | SpocError::ModelEvaluation { .. } => true,
            SpocError::InRun { source, .. } => source.is_numeric_blowup(),
            _ => false,
        }
    }

    /// True for configuration and validation failures.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            SpocError::Config(_)
                | SpocError::InvalidSchedule(_)
                | SpocError::Json(_)
                | SpocError::DimensionMismatch { .. }
                | SpocError::SizeCap { .. }
        )
    }
}

pub type Result<T, E = SpocError> = std::result::Result<T, E>;
