use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unknown class \"{0}\"")]
    UnknownClass(String),
    #[error("missing mesh file {0}")]
    MissingMesh(PathBuf),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid palette: {0}")]
    InvalidPalette(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("empty camera rig")]
    EmptyRig,
    #[error("no scene states to render")]
    NoStates,
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid dataset configuration: {0}")]
    InvalidDataset(String),
    #[error("dataset already exists at {0} (use force to overwrite)")]
    DatasetExists(PathBuf),
    #[error("empty training split")]
    EmptyTrainSplit,
    #[error("unmatched files: {0}")]
    UnmatchedFiles(String),
    #[error("nothing to evaluate: {0}")]
    EmptyEvaluation(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("image codec error for {path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error for {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io { path: path.into(), source })
    }
}
