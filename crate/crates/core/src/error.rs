use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the fusion pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed PGM {path}: {reason}")]
    MalformedPgm { path: PathBuf, reason: String },

    #[error("malformed manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("slice {slice} has no expert annotation")]
    AllExpertsMissing { slice: usize },

    #[error("union of annotations is empty")]
    EmptyAnnotationUnion,

    #[error("training labels contain a single class")]
    DegenerateLabels,

    #[error("expert {expert} has no annotation on any slice")]
    UnimputableExpert { expert: String },

    #[error("negative pairwise weight {weight} on edge ({u}, {v})")]
    NonSubmodular { u: usize, v: usize, weight: f64 },

    #[error("Hausdorff distance undefined for an empty mask")]
    UndefinedHausdorff,

    #[error("contour perturbation failed after {attempts} attempts")]
    PerturbationFailed { attempts: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{0}")]
    Usage(String),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short kebab-case category used on the command line's error line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MalformedPgm { .. } => "malformed-pgm",
            Error::Manifest { .. } => "malformed-manifest",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::AllExpertsMissing { .. } => "all-experts-missing",
            Error::EmptyAnnotationUnion => "empty-annotation-union",
            Error::DegenerateLabels => "degenerate-labels",
            Error::UnimputableExpert { .. } => "unimputable-expert",
            Error::NonSubmodular { .. } => "non-submodular",
            Error::UndefinedHausdorff => "undefined-hd",
            Error::PerturbationFailed { .. } => "perturbation-failed",
            Error::InvalidInput(_) => "invalid-input",
            Error::Usage(_) => "usage",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
