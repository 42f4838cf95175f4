//! Crate-wide error type.

use crate::graph::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("duplicate node id {0}")]
    DuplicateNodeId(NodeId),

    #[error("unknown node id {0}")]
    UnknownNode(NodeId),

    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(NodeId),

    #[error("node text must be present for all nodes or for none")]
    MixedNodeText,

    #[error("node {0} has no label")]
    UnlabeledNode(NodeId),

    #[error("edge homophily is undefined on an empty edge set")]
    EmptyEdgeSet,

    #[error("infeasible synthetic graph: {0}")]
    InfeasibleSynthesis(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("missing required attribute: {0}")]
    MissingAttribute(String),

    #[error("no embedding stored for key {0:?}")]
    MissingEmbedding(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("attention requires at least one key vector")]
    EmptyKeys,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("http request failed after {retries} attempt(s): {message}")]
    Http { message: String, retries: u32 },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
