use thiserror::Error;

#[derive(Debug, Error)]
pub enum PdaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite values in {context}")]
    NonFinite { context: String },

    #[error("could not parse phase decomposition from model response: {raw:?}")]
    DecompositionParse { raw: String },

    #[error("llm provider error: {0}")]
    Provider(String),

    #[error("no {phase} description for class {class:?}")]
    MissingDescription { class: String, phase: String },

    #[error("bad feature file: {0}")]
    Format(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PdaError>;

pub(crate) fn ensure_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(PdaError::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}
