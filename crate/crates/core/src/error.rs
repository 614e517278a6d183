use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed wav: {0}")]
    MalformedWav(String),
    #[error("unsupported wav: {0}")]
    UnsupportedWav(String),
    #[error("invalid audio: {0}")]
    InvalidAudio(String),
    #[error("clip of {len} samples is shorter than one {window}-sample window")]
    ClipTooShort { len: usize, window: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("normalization state: {0}")]
    NormState(String),
    #[error("unsupported placement: {0}")]
    Placement(String),
    #[error("room too small for requested T60: absorption {alpha:.4} ≥ 1")]
    RoomTooSmall { alpha: f64 },
    #[error("position outside room: {0}")]
    OutsideRoom(String),
    #[error("silent signal: {0}")]
    Silent(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint does not match configuration: tensor {name}: {detail}")]
    CheckpointMismatch { name: String, detail: String },
    #[error("training: {0}")]
    Training(String),
    #[error("non-finite loss at step {step} (batch {batch_index}): {detail}")]
    NonFiniteLoss {
        step: u64,
        batch_index: usize,
        detail: String,
    },
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("no voiced frames in reference")]
    NoVoicedFrames,
    #[error(transparent)]
    Autodiff(#[from] fsegan_autodiff::AutodiffError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
