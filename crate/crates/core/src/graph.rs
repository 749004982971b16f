//! The PROV property digraph: id-indexed nodes and edges, adjacency lists,
//! structural validity checks, and the height/width measurement.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{NodeKind, PropMap, RelationKind, Timestamp};

/// Index-based node handle, rendered as `n{index}` in serializations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

/// Index-based edge handle, rendered as `e{index}` in serializations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId(pub u32);

impl NodeId {
    pub fn label(self) -> String {
        format!("n{}", self.0)
    }
}

impl EdgeId {
    pub fn label(self) -> String {
        format!("e{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub props: PropMap,
    /// Start/end timestamps; populated for activities only.
    pub start: Option<Timestamp>,
    pub end: Option<Timestamp>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub kind: RelationKind,
    pub src: NodeId,
    pub dst: NodeId,
    pub props: PropMap,
    pub time: Option<Timestamp>,
}

/// Which incident edges a degree query counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    In,
    Out,
    Both,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum GraphError {
    #[error("edge kind {kind} does not admit {src_kind} -> {dst_kind}")]
    SignatureMismatch {
        kind: RelationKind,
        src_kind: NodeKind,
        dst_kind: NodeKind,
    },
    #[error("entity {entity} already has a WasGeneratedBy edge ({existing})")]
    UniqueGenerationViolation { entity: NodeId, existing: EdgeId },
    #[error("edge endpoint {node} does not exist")]
    DanglingEndpoint { node: NodeId },
    #[error("unknown node {node}")]
    UnknownNode { node: NodeId },
    #[error("graph contains a directed cycle; height/width are undefined")]
    CyclicGraph,
    #[error("activity start {start} is after end {end}")]
    InvalidTimeInterval { start: Timestamp, end: Timestamp },
}

/// A structural invariant breach found by [`ProvGraph::validate`].
/// Violations are data, not failures: they can only arise in graphs built
/// through the unchecked loaders.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    SignatureMismatch {
        edge: EdgeId,
        kind: RelationKind,
        src_kind: NodeKind,
        dst_kind: NodeKind,
    },
    MultipleGeneration {
        entity: NodeId,
        edges: Vec<EdgeId>,
    },
    DanglingEndpoint {
        edge: EdgeId,
        node: NodeId,
    },
    InvalidTimeInterval {
        node: NodeId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SignatureMismatch {
                edge,
                kind,
                src_kind,
                dst_kind,
            } => write!(
                f,
                "edge {edge}: {kind} does not admit {src_kind} -> {dst_kind}"
            ),
            Violation::MultipleGeneration { entity, edges } => {
                let ids: Vec<String> = edges.iter().map(|e| e.to_string()).collect();
                write!(
                    f,
                    "entity {entity}: generated by multiple activities ({})",
                    ids.join(", ")
                )
            }
            Violation::DanglingEndpoint { edge, node } => {
                write!(f, "edge {edge}: endpoint {node} does not exist")
            }
            Violation::InvalidTimeInterval { node } => {
                write!(f, "activity {node}: start time is after end time")
            }
        }
    }
}

/// Per-node incident-edge counters, one slot per relation kind and direction.
#[derive(Debug, Clone, Default)]
struct IncidenceCounts {
    incoming: [u32; RelationKind::COUNT],
    outgoing: [u32; RelationKind::COUNT],
}

/// A typed PROV property digraph.
///
/// Nodes and edges live in insertion-order arenas; every serialization
/// iterates them in that order, which keeps output byte-deterministic.
#[derive(Debug, Clone, Default)]
pub struct ProvGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    incoming: Vec<Vec<EdgeId>>,
    outgoing: Vec<Vec<EdgeId>>,
    counts: Vec<IncidenceCounts>,
    by_kind: [Vec<NodeId>; 3],
    /// Normalized (lo, hi, kind) endpoint pairs, for connect-rule dedup.
    pair_index: HashSet<(u32, u32, u8)>,
}

impl ProvGraph {
    pub fn new() -> ProvGraph {
        ProvGraph::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0 as usize)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(id.0 as usize)
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> &[NodeId] {
        &self.by_kind[kind as usize]
    }

    pub fn incoming_edges(&self, id: NodeId) -> &[EdgeId] {
        &self.incoming[id.0 as usize]
    }

    pub fn outgoing_edges(&self, id: NodeId) -> &[EdgeId] {
        &self.outgoing[id.0 as usize]
    }

    pub fn add_node(&mut self, kind: NodeKind, props: PropMap) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            id,
            kind,
            props,
            start: None,
            end: None,
        });
        self.incoming.push(Vec::new());
        self.outgoing.push(Vec::new());
        self.counts.push(IncidenceCounts::default());
        self.by_kind[kind as usize].push(id);
        id
    }

    /// Set an activity's start/end interval. Rejects start > end.
    pub fn set_activity_times(
        &mut self,
        id: NodeId,
        start: Option<Timestamp>,
        end: Option<Timestamp>,
    ) -> Result<(), GraphError> {
        if let (Some(s), Some(e)) = (&start, &end) {
            if !s.is_before_or_equal(e) {
                return Err(GraphError::InvalidTimeInterval {
                    start: s.clone(),
                    end: e.clone(),
                });
            }
        }
        let node = self
            .nodes
            .get_mut(id.0 as usize)
            .ok_or(GraphError::UnknownNode { node: id })?;
        node.start = start;
        node.end = end;
        Ok(())
    }

    /// Set times without the interval check; deserializers use this so that
    /// invalid inputs load and then fail `validate`.
    pub(crate) fn set_activity_times_unchecked(
        &mut self,
        id: NodeId,
        start: Option<Timestamp>,
        end: Option<Timestamp>,
    ) {
        if let Some(node) = self.nodes.get_mut(id.0 as usize) {
            node.start = start;
            node.end = end;
        }
    }

    pub fn add_edge(
        &mut self,
        kind: RelationKind,
        src: NodeId,
        dst: NodeId,
        props: PropMap,
    ) -> Result<EdgeId, GraphError> {
        self.add_edge_timed(kind, src, dst, props, None)
    }

    pub fn add_edge_timed(
        &mut self,
        kind: RelationKind,
        src: NodeId,
        dst: NodeId,
        props: PropMap,
        time: Option<Timestamp>,
    ) -> Result<EdgeId, GraphError> {
        let src_kind = self
            .node(src)
            .ok_or(GraphError::DanglingEndpoint { node: src })?
            .kind;
        let dst_kind = self
            .node(dst)
            .ok_or(GraphError::DanglingEndpoint { node: dst })?
            .kind;
        if !kind.admits(src_kind, dst_kind) {
            return Err(GraphError::SignatureMismatch {
                kind,
                src_kind,
                dst_kind,
            });
        }
        if kind == RelationKind::WasGeneratedBy {
            if let Some(&existing) = self.outgoing[src.0 as usize]
                .iter()
                .find(|e| self.edges[e.0 as usize].kind == RelationKind::WasGeneratedBy)
            {
                return Err(GraphError::UniqueGenerationViolation {
                    entity: src,
                    existing,
                });
            }
        }
        Ok(self.insert_edge_unchecked(kind, src, dst, props, time))
    }

    /// Append an edge without structural checks. Used by the deserializers
    /// so that invalid inputs can be loaded and then reported by `validate`.
    pub(crate) fn insert_edge_unchecked(
        &mut self,
        kind: RelationKind,
        src: NodeId,
        dst: NodeId,
        props: PropMap,
        time: Option<Timestamp>,
    ) -> EdgeId {
        let id = EdgeId(self.edges.len() as u32);
        self.edges.push(Edge {
            id,
            kind,
            src,
            dst,
            props,
            time,
        });
        if let Some(slot) = self.outgoing.get_mut(src.0 as usize) {
            slot.push(id);
            self.counts[src.0 as usize].outgoing[kind.index()] += 1;
        }
        if let Some(slot) = self.incoming.get_mut(dst.0 as usize) {
            slot.push(id);
            self.counts[dst.0 as usize].incoming[kind.index()] += 1;
        }
        self.pair_index.insert(pair_key(src, dst, kind));
        id
    }

    /// Remove the most recently added edge. Supports atomic rollback of a
    /// speculative mutation; only valid for the edge returned by the latest
    /// insertion.
    pub(crate) fn pop_last_edge(&mut self) {
        let Some(edge) = self.edges.pop() else { return };
        if let Some(slot) = self.outgoing.get_mut(edge.src.0 as usize) {
            slot.pop();
            self.counts[edge.src.0 as usize].outgoing[edge.kind.index()] -= 1;
        }
        if let Some(slot) = self.incoming.get_mut(edge.dst.0 as usize) {
            slot.pop();
            self.counts[edge.dst.0 as usize].incoming[edge.kind.index()] -= 1;
        }
        // Parallel edges of the same kind may remain; only drop the key when
        // this was the last one.
        let key = pair_key(edge.src, edge.dst, edge.kind);
        let still_present = self
            .outgoing
            .get(edge.src.0 as usize)
            .map(|edges| {
                edges.iter().any(|e| {
                    let other = &self.edges[e.0 as usize];
                    pair_key(other.src, other.dst, other.kind) == key
                })
            })
            .unwrap_or(false)
            || self
                .outgoing
                .get(edge.dst.0 as usize)
                .map(|edges| {
                    edges.iter().any(|e| {
                        let other = &self.edges[e.0 as usize];
                        pair_key(other.src, other.dst, other.kind) == key
                    })
                })
                .unwrap_or(false);
        if !still_present {
            self.pair_index.remove(&key);
        }
    }

    /// Remove the most recently added node; it must have no incident edges.
    pub(crate) fn pop_last_node(&mut self) {
        let Some(node) = self.nodes.last() else {
            return;
        };
        debug_assert!(self.incoming[node.id.0 as usize].is_empty());
        debug_assert!(self.outgoing[node.id.0 as usize].is_empty());
        let kind = node.kind;
        self.by_kind[kind as usize].pop();
        self.nodes.pop();
        self.incoming.pop();
        self.outgoing.pop();
        self.counts.pop();
    }

    /// Whether any edge of `kind` runs between the two nodes, in either
    /// direction.
    pub fn connected_by(&self, a: NodeId, b: NodeId, kind: RelationKind) -> bool {
        self.pair_index.contains(&pair_key(a, b, kind))
    }

    /// Count of incident edges, optionally restricted to one relation kind.
    pub fn degree(
        &self,
        node: NodeId,
        direction: Direction,
        filter: Option<RelationKind>,
    ) -> Result<u32, GraphError> {
        let counts = self
            .counts
            .get(node.0 as usize)
            .ok_or(GraphError::UnknownNode { node })?;
        let sum = |slots: &[u32; RelationKind::COUNT]| -> u32 {
            match filter {
                Some(kind) => slots[kind.index()],
                None => slots.iter().sum(),
            }
        };
        Ok(match direction {
            Direction::In => sum(&counts.incoming),
            Direction::Out => sum(&counts.outgoing),
            Direction::Both => sum(&counts.incoming) + sum(&counts.outgoing),
        })
    }

    /// Incident-edge count in both directions for one relation kind.
    /// Panics on unknown nodes; engine-internal fast path.
    pub fn relation_incidence(&self, node: NodeId, kind: RelationKind) -> u32 {
        let counts = &self.counts[node.0 as usize];
        counts.incoming[kind.index()] + counts.outgoing[kind.index()]
    }

    /// Check every structural invariant and return the breaches found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        for edge in &self.edges {
            let src = self.node(edge.src);
            let dst = self.node(edge.dst);
            if src.is_none() {
                violations.push(Violation::DanglingEndpoint {
                    edge: edge.id,
                    node: edge.src,
                });
            }
            if dst.is_none() {
                violations.push(Violation::DanglingEndpoint {
                    edge: edge.id,
                    node: edge.dst,
                });
            }
            if let (Some(src), Some(dst)) = (src, dst) {
                if !edge.kind.admits(src.kind, dst.kind) {
                    violations.push(Violation::SignatureMismatch {
                        edge: edge.id,
                        kind: edge.kind,
                        src_kind: src.kind,
                        dst_kind: dst.kind,
                    });
                }
            }
        }
        for node in &self.nodes {
            if node.kind == NodeKind::Entity {
                let generations: Vec<EdgeId> = self.outgoing[node.id.0 as usize]
                    .iter()
                    .copied()
                    .filter(|e| self.edges[e.0 as usize].kind == RelationKind::WasGeneratedBy)
                    .collect();
                if generations.len() > 1 {
                    violations.push(Violation::MultipleGeneration {
                        entity: node.id,
                        edges: generations,
                    });
                }
            }
            if let (Some(s), Some(e)) = (&node.start, &node.end) {
                if !s.is_before_or_equal(e) {
                    violations.push(Violation::InvalidTimeInterval { node: node.id });
                }
            }
        }
        violations
    }

    /// Longest-path depth of every node, where depth is measured from any
    /// source (in-degree 0). Errors out on cycles.
    pub fn depths(&self) -> Result<Vec<u32>, GraphError> {
        let n = self.nodes.len();
        let mut indegree: Vec<u32> = vec![0; n];
        for edge in &self.edges {
            indegree[edge.dst.0 as usize] += 1;
        }
        let mut depth = vec![0u32; n];
        let mut queue: Vec<u32> = (0..n as u32)
            .filter(|&i| indegree[i as usize] == 0)
            .collect();
        let mut seen = 0usize;
        let mut head = 0usize;
        while head < queue.len() {
            let u = queue[head] as usize;
            head += 1;
            seen += 1;
            for &eid in &self.outgoing[u] {
                let v = self.edges[eid.0 as usize].dst.0 as usize;
                depth[v] = depth[v].max(depth[u] + 1);
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    queue.push(v as u32);
                }
            }
        }
        if seen != n {
            return Err(GraphError::CyclicGraph);
        }
        Ok(depth)
    }

    /// (height, width): edges on the longest directed path, and the largest
    /// number of nodes sharing one depth. An empty graph is (0, 0).
    pub fn height_width(&self) -> Result<(u32, u32), GraphError> {
        let depth = self.depths()?;
        let height = depth.iter().copied().max().unwrap_or(0);
        let mut level_counts = vec![0u32; height as usize + 1];
        for &d in &depth {
            level_counts[d as usize] += 1;
        }
        let width = level_counts.iter().copied().max().unwrap_or(0);
        if self.nodes.is_empty() {
            return Ok((0, 0));
        }
        Ok((height, width))
    }
}

fn pair_key(a: NodeId, b: NodeId, kind: RelationKind) -> (u32, u32, u8) {
    let (lo, hi) = if a.0 <= b.0 { (a.0, b.0) } else { (b.0, a.0) };
    (lo, hi, kind.index() as u8)
}
