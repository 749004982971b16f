//! Line-delimited JSON graph serialization: one object per node, then one
//! per edge. Insertion order is preserved, so output is byte-deterministic.
//!
//! ```text
//! {"id":"n0","kind":"Entity","props":{"prov:type":"Document"}}
//! {"id":"e0","kind":"Used","src":"n1","dst":"n0","props":{}}
//! ```

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::graph::{NodeId, ProvGraph};
use crate::model::{NodeKind, PropMap, RelationKind, Timestamp};

#[derive(Debug, Serialize, Deserialize)]
struct NodeLine {
    id: String,
    kind: NodeKind,
    props: PropMap,
    #[serde(skip_serializing_if = "Option::is_none")]
    start: Option<Timestamp>,
    #[serde(skip_serializing_if = "Option::is_none")]
    end: Option<Timestamp>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeLine {
    id: String,
    kind: RelationKind,
    src: String,
    dst: String,
    props: PropMap,
    #[serde(skip_serializing_if = "Option::is_none")]
    time: Option<Timestamp>,
}

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Serialize to JSON lines, nodes first, LF line endings.
pub fn write_jsonl(graph: &ProvGraph) -> String {
    let mut out = String::new();
    for node in graph.nodes() {
        let line = NodeLine {
            id: node.id.label(),
            kind: node.kind,
            props: node.props.clone(),
            start: node.start.clone(),
            end: node.end.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("node serialization is infallible"));
        out.push('\n');
    }
    for edge in graph.edges() {
        let line = EdgeLine {
            id: edge.id.label(),
            kind: edge.kind,
            src: edge.src.label(),
            dst: edge.dst.label(),
            props: edge.props.clone(),
            time: edge.time.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("edge serialization is infallible"));
        out.push('\n');
    }
    out
}

/// Load from JSON lines without enforcing structural invariants; callers
/// run `validate` to surface breaches. Unknown endpoint ids become dangling
/// references that `validate` reports.
pub fn read_jsonl(text: &str) -> Result<ProvGraph, JsonlError> {
    let mut graph = ProvGraph::new();
    let mut ids: HashMap<String, NodeId> = HashMap::new();
    let mut edges: Vec<(usize, EdgeLine)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        // Edge objects carry src/dst; node objects do not.
        let value: serde_json::Value =
            serde_json::from_str(trimmed).map_err(|e| JsonlError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        if value.get("src").is_some() {
            let edge: EdgeLine =
                serde_json::from_value(value).map_err(|e| JsonlError::Malformed {
                    line: line_no,
                    message: e.to_string(),
                })?;
            edges.push((line_no, edge));
        } else {
            let node: NodeLine =
                serde_json::from_value(value).map_err(|e| JsonlError::Malformed {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let id = graph.add_node(node.kind, node.props);
            graph.set_activity_times_unchecked(id, node.start, node.end);
            if ids.insert(node.id.clone(), id).is_some() {
                return Err(JsonlError::Malformed {
                    line: line_no,
                    message: format!("duplicate node id {:?}", node.id),
                });
            }
        }
    }
    for (_line_no, edge) in edges {
        let resolve = |label: &str| ids.get(label).copied().unwrap_or(NodeId(u32::MAX));
        graph.insert_edge_unchecked(
            edge.kind,
            resolve(&edge.src),
            resolve(&edge.dst),
            edge.props,
            edge.time,
        );
    }
    Ok(graph)
}
