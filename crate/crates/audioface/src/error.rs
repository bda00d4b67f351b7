//! Error type shared by all pipeline stages.

use thiserror::Error;

/// Errors produced by the normalization, modeling and synthesis stages.
#[derive(Debug, Error)]
pub enum PipelineError {
    /// Point-set alignment received degenerate input (fewer than 3 points,
    /// or an (almost) collinear cloud).
    #[error("degenerate alignment input: {0}")]
    AlignmentDegenerate(String),

    /// Cylinder fitting collapsed (all vertices on the axis).
    #[error("degenerate cylinder fit: {0}")]
    DegenerateCylinder(String),

    /// A vertex lies exactly on the cylinder axis; its azimuth is undefined.
    #[error("undefined azimuth: vertex {index} lies on the cylinder axis")]
    UndefinedAzimuth { index: usize },

    /// Tensor or image dimensions do not match what an operation expects.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Input failed a structural validity check.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A declared file format was violated.
    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    /// Configuration file could not be parsed or contains unknown keys.
    #[error("config error: {0}")]
    Config(String),

    /// Training diverged (non-finite loss).
    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    /// Dataset is empty or otherwise unusable for training.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(String),
}

impl PipelineError {
    /// Short machine-parsable code, stable across releases; the CLI prints
    /// `error: <code>: <message>` on failure.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::AlignmentDegenerate(_) => "alignment-degenerate",
            PipelineError::DegenerateCylinder(_) => "degenerate-cylinder",
            PipelineError::UndefinedAzimuth { .. } => "undefined-azimuth",
            PipelineError::ShapeMismatch(_) => "shape-mismatch",
            PipelineError::InvalidInput(_) => "invalid-input",
            PipelineError::Format { .. } => "format",
            PipelineError::Config(_) => "config",
            PipelineError::Divergence { .. } => "divergence",
            PipelineError::EmptyDataset(_) => "empty-dataset",
            PipelineError::Io(_) => "io",
            PipelineError::Image(_) => "image",
        }
    }
}
