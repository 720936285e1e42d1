use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ForgeError>;

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("slab offset {offset} out of range (max {max})")]
    OffsetOutOfRange { offset: usize, max: usize },

    #[error("no acceptable slice after {0} attempts")]
    ExhaustedRetries(usize),

    #[error("no cell found in image")]
    NoCellFound,

    #[error("no candidate boxes cover the cell mask")]
    NoCandidates,

    #[error("candidate set is empty")]
    EmptyCandidateSet,

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("background {image}: {source}")]
    Background {
        image: String,
        #[source]
        source: Box<ForgeError>,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl ForgeError {
    /// True when the root cause is a failed central-cell segmentation.
    pub fn is_no_cell_found(&self) -> bool {
        match self {
            ForgeError::NoCellFound => true,
            ForgeError::Background { source, .. } => source.is_no_cell_found(),
            _ => false,
        }
    }
}
