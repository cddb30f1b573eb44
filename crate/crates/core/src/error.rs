use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("face index {face} out of range ({count} faces)")]
    FaceOutOfRange { face: usize, count: usize },

    #[error("degenerate tetrahedron (|volume| {volume:e} <= {eps:e})")]
    DegenerateTet { volume: f64, eps: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shape `{shape}` has {actual} vertices, neutral has {expected}")]
    TopologyMismatch {
        shape: String,
        expected: usize,
        actual: usize,
    },

    #[error("shape `{0}` has no jaw pose")]
    MissingJawPose(String),

    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },

    #[error("unknown shape `{0}`")]
    UnknownShape(String),

    #[error("unknown bundle `{0}`")]
    UnknownBundle(String),

    #[error("non-invertible skinning transform at vertex {vertex} (det {det:e})")]
    SingularSkinning { vertex: usize, det: f64 },

    #[error("invalid library: {0}")]
    InvalidLibrary(String),

    #[error(
        "bundle `{bundle}` would enumerate {count} tetrahedra (cap {cap}); \
         tighten pruning or enable jaw binning"
    )]
    CombinatorialCap {
        bundle: String,
        count: u64,
        cap: u64,
    },

    #[error("invalid index file: {0}")]
    InvalidIndex(String),

    #[error("invalid weight cache: {0}")]
    InvalidWeightCache(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by inconsistent or malformed user input rather than
    /// environment failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
