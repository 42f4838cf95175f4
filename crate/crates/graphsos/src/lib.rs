//! Graph serialization-order and subgraph-sampling pipeline for LLM graph
//! tasks, with pluggable encoders, scoring oracles, and LLM backends so that
//! every trainable mechanism runs and tests offline at desk scale.
//!
//! The pipeline view: a graph is rendered to text by a serialization function
//! under an explicit element ordering; a subgraph sampling module extracts a
//! bounded subgraph around a target node with attention-guided random walks;
//! an order selector module picks one of several candidate orderings by
//! cross-attending the question against candidate embeddings; downstream,
//! prompt/dataset builders and an order-sensitivity benchmark harness close
//! the loop.
//!
//! Start with the `examples/` directory: each major capability has one
//! runnable example. The `graphsos` binary exposes the same stages as thin
//! subcommands.

pub mod attention;
pub mod backend;
pub mod bench;
pub mod config;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod jsonl;
pub mod osm;
pub mod serialize;
pub mod ssm;
pub mod tuning;

pub use error::{Error, Result};
pub use graph::{LabelAssignment, NodeId, NodeRecord, TextGraph};
