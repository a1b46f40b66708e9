use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // audio
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("audio contains no samples: {}", .0.display())]
    EmptyAudio(PathBuf),

    // backend
    #[error("audio too short: {samples} samples yields no frame (receptive field {receptive_field})")]
    AudioTooShort {
        samples: usize,
        receptive_field: usize,
    },
    #[error("layer {layer} out of range 1..={num_layers}")]
    LayerOutOfRange { layer: usize, num_layers: usize },
    #[error("masked index {index} out of range for {frames} frames")]
    MaskIndexOutOfRange { index: usize, frames: usize },
    #[error("graph execution failed: {0}")]
    GraphExecution(String),
    #[error("invalid model bundle: {0}")]
    InvalidBundle(String),

    // masking
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    // quantizer
    #[error("bad magic bytes: expected KMCB")]
    BadMagic,
    #[error("unsupported codebook version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("layer mismatch: features from layer {features}, codebook for layer {codebook}")]
    LayerMismatch { features: usize, codebook: usize },
    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),

    // scoring
    #[error("recovered positions for repetition {repetition} do not match the mask plan")]
    PlanMismatch { repetition: usize },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    // evaluation
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("missing audio for {utt_id}: {}", .path.display())]
    MissingAudio { utt_id: String, path: PathBuf },
    #[error("{}:{line}: {message}", .path.display())]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("malformed score file {}: {message}", .path.display())]
    ScoreFile { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by caller-supplied parameters rather than
    /// by data, files or the model.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidParams(_) | Error::LayerOutOfRange { .. })
    }
}
