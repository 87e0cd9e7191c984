use std::path::PathBuf;

use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Validation,
    Training,
}

/// Why a graph failed to validate as a rooted tree.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("node `{0}` has more than one parent")]
    MultipleParents(String),
    #[error("graph has several roots: `{first}` and `{second}`")]
    MultipleRoots { first: String, second: String },
    #[error("graph has no root")]
    NoRoot,
    #[error("cycle through node `{0}`")]
    Cycle(String),
    #[error("node `{0}` is not connected to the root")]
    Disconnected(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown node id {0}")]
    UnknownNode(NodeId),

    #[error("graph is not a tree ({0}); supply a backbone tree for ancestry queries")]
    NotATree(TreeError),

    #[error("tree validation failed: {0}")]
    Validation(#[from] TreeError),

    #[error("non-finite gradient on edge ({source_node}, {target})")]
    NonFiniteGradient { source_node: NodeId, target: NodeId },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Validation(_) => ErrorKind::Validation,
            Error::NonFiniteGradient { .. } => ErrorKind::Training,
            _ => ErrorKind::Input,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
