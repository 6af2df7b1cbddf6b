use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),

    #[error("augmented sample `{id}` references missing parent `{parent_id}`")]
    DanglingParent { id: String, parent_id: String },

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("translation failed for `{id}` via {pivot}: {message}")]
    Translation {
        id: String,
        pivot: String,
        message: String,
    },

    #[error("translation cache miss for {source_lang}->{target} (text sha256 {text_sha256})")]
    CacheMiss {
        text_sha256: String,
        source_lang: String,
        target: String,
    },

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    #[error("missing audio for planned sample `{0}`")]
    MissingAudio(String),

    #[error("clip too short: {samples} samples, need at least {window}")]
    ClipTooShort { samples: usize, window: usize },

    #[error("invalid audio: {0}")]
    InvalidAudio(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("encoder `{adapter}` failed: {message}")]
    Encoder { adapter: String, message: String },

    #[error("invalid feature file: {0}")]
    FeatureFormat(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("NaN loss at epoch {epoch} (fold {fold})")]
    NanLoss { fold: usize, epoch: usize },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("missing configuration `{0}`")]
    MissingConfiguration(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("plot: {0}")]
    Plot(String),
}
