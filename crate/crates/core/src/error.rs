use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("not a NIfTI-1 single file: {0}")]
    NotNifti(String),

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("unsupported dimensions: {0}")]
    UnsupportedDims(String),

    #[error("value {value} is not representable as {kind}")]
    DatatypeOverflow { value: f64, kind: &'static str },

    #[error("singular transform (|det| = {0:e})")]
    SingularTransform(f64),

    #[error("ambiguous orientation: voxel axes {0} and {1} share dominant world axis {2}")]
    AmbiguousOrientation(usize, usize, usize),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("mask is empty")]
    EmptyMask,

    #[error("no overlap between fixed samples and moving image")]
    NoOverlap,

    #[error("degenerate convex hull: points are collinear or too few")]
    DegenerateHull,

    #[error("both masks are empty")]
    BothEmpty,

    #[error("invalid template pack: {0}")]
    InvalidTemplatePack(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("stage {stage} ({name}) failed: {source}")]
    Stage {
        stage: u8,
        name: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Strips stage tags down to the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn stage(&self) -> Option<u8> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}
