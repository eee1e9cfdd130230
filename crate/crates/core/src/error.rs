use std::path::PathBuf;

use thiserror::Error;

use crate::complex::DomainKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A cell list violates the invariants of its domain kind.
    #[error("invalid {kind} complex: {message}")]
    Invalid { kind: DomainKind, message: String },

    #[error("rank {rank} out of range (max rank {max_rank})")]
    RankOutOfRange { rank: usize, max_rank: usize },

    #[error("unknown cell (rank {rank}, index {index})")]
    UnknownCell { rank: usize, index: usize },

    #[error("unknown vertex label {0:?}")]
    UnknownVertex(String),

    #[error("permutation for rank {rank} is not a bijection on 0..{len}")]
    NotBijective { rank: usize, len: usize },

    #[error("{op}: dimension mismatch ({left:?} vs {right:?})")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{what} is undefined on an orientation-free domain ({kind})")]
    OrientationFree { what: &'static str, kind: DomainKind },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cycle enumeration exceeded {limit} cycles")]
    CycleLimit { limit: usize },

    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("no features at rank {0}")]
    MissingFeatures(usize),

    #[error("missing parameter {0:?}")]
    MissingParameter(String),

    #[error("layer {layer}, rank {rank}: {source}")]
    Layer {
        layer: usize,
        rank: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(kind: DomainKind, message: impl Into<String>) -> Self {
        Error::Invalid {
            kind,
            message: message.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape { op, left, right }
    }

    pub(crate) fn in_layer(self, layer: usize, rank: usize) -> Self {
        Error::Layer {
            layer,
            rank,
            source: Box::new(self),
        }
    }

    /// Errors caused by bad input data (as opposed to bad invocation).
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Config(_) | Error::InvalidArgument(_))
    }
}
