use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::{ParcelDims, Placement};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("footprint {l}x{w} at ({x}, {y}) leaves the {length}x{width} bin floor")]
    OutOfBounds {
        x: u32,
        y: u32,
        l: u32,
        w: u32,
        length: u32,
        width: u32,
    },

    #[error("infeasible placement {placement:?} for parcel {dims:?}")]
    Infeasible { dims: ParcelDims, placement: Placement },

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("distribution is not normalized (mass {0})")]
    Unnormalized(f64),

    #[error("empty action set")]
    EmptyActionSet,

    #[error("node is already expanded")]
    AlreadyExpanded,

    #[error("bin is full: no feasible placement for the current parcel")]
    BinFull,

    #[error("search budget exceeded: {0}")]
    Budget(String),

    #[error("{0} is not a child of the current root")]
    NotARootChild(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("value iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
