//! Graph interchange: one JSON object per line with `nodes`, `edges`, and
//! optional `triples`, `question`, `answer` fields. Unknown fields are
//! ignored.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeRecord, TextGraph};

#[derive(Serialize, Deserialize)]
struct RawNode {
    id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    #[serde(default)]
    nodes: Vec<RawNode>,
    #[serde(default)]
    edges: Vec<[u64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    triples: Option<Vec<[String; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer: Option<String>,
}

/// A graph plus the optional question/answer pair riding along with it.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphRecord {
    pub graph: TextGraph,
    pub question: Option<String>,
    pub answer: Option<String>,
}

impl GraphRecord {
    pub fn bare(graph: TextGraph) -> Self {
        Self { graph, question: None, answer: None }
    }

    pub fn qa(graph: TextGraph, question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self { graph, question: Some(question.into()), answer: Some(answer.into()) }
    }
}

/// Parse one interchange line.
pub fn parse_graph_record(line: &str) -> Result<GraphRecord> {
    let raw: RawRecord = serde_json::from_str(line)?;
    let nodes = raw
        .nodes
        .into_iter()
        .map(|n| NodeRecord { id: n.id, text: n.text, label: n.label })
        .collect();
    let edges = raw.edges.into_iter().map(|[u, v]| (u, v)).collect();
    let triples = raw
        .triples
        .unwrap_or_default()
        .into_iter()
        .map(|[s, r, o]| (s, r, o))
        .collect();
    let graph = TextGraph::with_triples(nodes, edges, triples, false)?;
    Ok(GraphRecord { graph, question: raw.question, answer: raw.answer })
}

/// Render one record as an interchange line (no trailing newline).
pub fn graph_record_to_json(record: &GraphRecord) -> Result<String> {
    let raw = RawRecord {
        nodes: record
            .graph
            .nodes()
            .iter()
            .map(|n| RawNode { id: n.id, text: n.text.clone(), label: n.label.clone() })
            .collect(),
        edges: record.graph.edges().iter().map(|&(u, v)| [u, v]).collect(),
        triples: if record.graph.triples().is_empty() {
            None
        } else {
            Some(
                record
                    .graph
                    .triples()
                    .iter()
                    .map(|(s, r, o)| [s.clone(), r.clone(), o.clone()])
                    .collect(),
            )
        },
        question: record.question.clone(),
        answer: record.answer.clone(),
    };
    Ok(serde_json::to_string(&raw)?)
}

/// Read every line of an interchange file, annotating failures with the
/// 1-based line number.
pub fn read_graph_jsonl(path: impl AsRef<Path>) -> Result<Vec<GraphRecord>> {
    let content = std::fs::read_to_string(&path)?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_graph_record(line).map_err(|e| {
            Error::Format(format!("{}:{}: {e}", path.as_ref().display(), i + 1))
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_graph_jsonl<'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a GraphRecord>,
) -> Result<()> {
    let mut out = String::new();
    for record in records {
        out.push_str(&graph_record_to_json(record)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
