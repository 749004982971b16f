//! Seed patterns and the rewrite rules derived from them.
//!
//! A seed pattern is a small PROV-N fragment. Its statements contribute
//! property templates (one per node kind and relation kind), and every
//! relation kind that occurs in it becomes "active": the generator derives
//! three rewrite rules per active kind.

use std::fmt;

use indexmap::IndexMap;
use serde::Serialize;

use crate::graph::{GraphError, ProvGraph};
use crate::model::{NodeKind, PropMap, PropValue, RelationKind, Timestamp};

/// Key into a seed pattern's property templates: a node kind or a
/// relation kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateKey {
    Node(NodeKind),
    Relation(RelationKind),
}

impl fmt::Display for TemplateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemplateKey::Node(k) => f.write_str(k.name()),
            TemplateKey::Relation(k) => f.write_str(k.name()),
        }
    }
}

impl From<NodeKind> for TemplateKey {
    fn from(kind: NodeKind) -> TemplateKey {
        TemplateKey::Node(kind)
    }
}

impl From<RelationKind> for TemplateKey {
    fn from(kind: RelationKind) -> TemplateKey {
        TemplateKey::Relation(kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("{key} does not occur in the seed pattern")]
    UnknownKey { key: TemplateKey },
}

/// One node declaration from a seed pattern.
#[derive(Debug, Clone, Serialize)]
pub struct NodeTemplate {
    pub local_id: String,
    pub kind: NodeKind,
    pub props: PropMap,
    pub start: Option<Timestamp>,
    pub end: Option<Timestamp>,
}

/// One relation statement from a seed pattern, with endpoints named by
/// local id.
#[derive(Debug, Clone, Serialize)]
pub struct EdgeTemplate {
    pub kind: RelationKind,
    pub src: String,
    pub dst: String,
    pub props: PropMap,
    pub time: Option<Timestamp>,
}

/// A non-fatal oddity noticed while assembling a seed pattern.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SeedWarning {
    /// Two declarations of the same kind assign different values to one
    /// property name; the first value is kept.
    PropertyConflict {
        scope: String,
        name: String,
        kept: PropValue,
        ignored: PropValue,
    },
    /// The seed declares no relations, so no rewrite rules derive from it
    /// and generation can only emit the bare start node.
    EmptyActiveSet,
}

impl std::fmt::Display for SeedWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SeedWarning::PropertyConflict {
                scope,
                name,
                kept,
                ignored,
            } => write!(
                f,
                "conflicting values for {name} on {scope}: keeping {}, ignoring {}",
                kept.provn_literal(),
                ignored.provn_literal()
            ),
            SeedWarning::EmptyActiveSet => write!(
                f,
                "the seed contains no relation statements; no rewrite rules derive from it"
            ),
        }
    }
}

/// The three rule shapes derived for every active relation kind, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RuleShape {
    /// Pick an existing target-kind node, create a fresh source node and an
    /// edge from it.
    GrowSource,
    /// Pick an existing source-kind node, create a fresh target node and an
    /// edge to it.
    GrowTarget,
    /// Pick two existing nodes of the right kinds and connect them.
    ConnectExisting,
}

impl RuleShape {
    pub const ALL: [RuleShape; 3] = [
        RuleShape::GrowSource,
        RuleShape::GrowTarget,
        RuleShape::ConnectExisting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleShape::GrowSource => "grow-source",
            RuleShape::GrowTarget => "grow-target",
            RuleShape::ConnectExisting => "connect-existing",
        }
    }
}

/// A graph rewrite rule, fully resolved against the seed's templates.
#[derive(Debug, Clone, Serialize)]
pub struct RewriteRule {
    pub kind: RelationKind,
    pub shape: RuleShape,
    /// Endpoint kinds. For fixed-signature relations these come from the
    /// signature table; for WasInfluencedBy they are taken from the first
    /// seed statement of that kind.
    pub src_kind: NodeKind,
    pub dst_kind: NodeKind,
    pub edge_props: PropMap,
    pub edge_time: Option<Timestamp>,
    /// Property template for the node this rule creates; empty for
    /// connect-existing rules.
    pub node_props: PropMap,
    pub node_start: Option<Timestamp>,
    pub node_end: Option<Timestamp>,
}

impl RewriteRule {
    /// The kind of node this rule creates, if any.
    pub fn spawned_kind(&self) -> Option<NodeKind> {
        match self.shape {
            RuleShape::GrowSource => Some(self.src_kind),
            RuleShape::GrowTarget => Some(self.dst_kind),
            RuleShape::ConnectExisting => None,
        }
    }

    /// The kind of existing node a grow rule anchors on.
    pub fn anchor_kind(&self) -> Option<NodeKind> {
        match self.shape {
            RuleShape::GrowSource => Some(self.dst_kind),
            RuleShape::GrowTarget => Some(self.src_kind),
            RuleShape::ConnectExisting => None,
        }
    }

    pub fn label(&self) -> String {
        format!("{}.{}", self.kind.name(), self.shape.name())
    }
}

/// A parsed seed pattern: its declarations plus the aggregated property
/// templates the rewrite rules draw from.
#[derive(Debug, Clone)]
pub struct SeedPattern {
    pub nodes: IndexMap<String, NodeTemplate>,
    pub edges: Vec<EdgeTemplate>,
    /// Relation kinds present in the seed, in first-occurrence order.
    pub active_kinds: Vec<RelationKind>,
    node_props: [PropMap; 3],
    activity_start: Option<Timestamp>,
    activity_end: Option<Timestamp>,
    edge_props: Vec<PropMap>,
    edge_times: Vec<Option<Timestamp>>,
}

impl SeedPattern {
    /// Aggregate declarations into a pattern. Property templates take the
    /// union of properties over declarations of the same kind; on a name
    /// collision the first value wins and a warning records the loser.
    pub fn assemble(
        nodes: IndexMap<String, NodeTemplate>,
        edges: Vec<EdgeTemplate>,
    ) -> (SeedPattern, Vec<SeedWarning>) {
        let mut warnings = Vec::new();
        let mut node_props: [PropMap; 3] = Default::default();
        let mut activity_start = None;
        let mut activity_end = None;
        for node in nodes.values() {
            merge_props(
                &mut node_props[node.kind as usize],
                &node.props,
                node.kind.name(),
                &mut warnings,
            );
            if node.kind == NodeKind::Activity
                && activity_start.is_none()
                && activity_end.is_none()
                && (node.start.is_some() || node.end.is_some())
            {
                activity_start = node.start.clone();
                activity_end = node.end.clone();
            }
        }
        let mut edge_props: Vec<PropMap> = vec![PropMap::new(); RelationKind::COUNT];
        let mut edge_times: Vec<Option<Timestamp>> = vec![None; RelationKind::COUNT];
        let mut active_kinds = Vec::new();
        for edge in &edges {
            if !active_kinds.contains(&edge.kind) {
                active_kinds.push(edge.kind);
            }
            merge_props(
                &mut edge_props[edge.kind.index()],
                &edge.props,
                edge.kind.name(),
                &mut warnings,
            );
            if edge_times[edge.kind.index()].is_none() {
                edge_times[edge.kind.index()] = edge.time.clone();
            }
        }
        if edges.is_empty() {
            warnings.push(SeedWarning::EmptyActiveSet);
        }
        (
            SeedPattern {
                nodes,
                edges,
                active_kinds,
                node_props,
                activity_start,
                activity_end,
                edge_props,
                edge_times,
            },
            warnings,
        )
    }

    /// Kind of the first node declared in the seed; generation starts from
    /// a single node of this kind.
    pub fn start_kind(&self) -> Option<NodeKind> {
        self.nodes.values().next().map(|n| n.kind)
    }

    /// Aggregated property template for nodes of one kind.
    pub fn node_template(&self, kind: NodeKind) -> &PropMap {
        &self.node_props[kind as usize]
    }

    /// Start/end timestamps of the first timestamped activity declaration.
    pub fn activity_times(&self) -> (Option<&Timestamp>, Option<&Timestamp>) {
        (self.activity_start.as_ref(), self.activity_end.as_ref())
    }

    /// Aggregated property template and time for edges of one kind.
    pub fn edge_template(&self, kind: RelationKind) -> (&PropMap, Option<&Timestamp>) {
        (
            &self.edge_props[kind.index()],
            self.edge_times[kind.index()].as_ref(),
        )
    }

    /// Harvested property pairs for a node or relation kind, in seed
    /// order. Unlike the unchecked template accessors this rejects kinds
    /// that never occur in the pattern.
    pub fn property_template(
        &self,
        key: impl Into<TemplateKey>,
    ) -> Result<Vec<(String, PropValue)>, TemplateError> {
        let key = key.into();
        let template = match key {
            TemplateKey::Node(kind) => {
                if !self.nodes.values().any(|n| n.kind == kind) {
                    return Err(TemplateError::UnknownKey { key });
                }
                self.node_template(kind)
            }
            TemplateKey::Relation(kind) => {
                if !self.active_kinds.contains(&kind) {
                    return Err(TemplateError::UnknownKey { key });
                }
                self.edge_template(kind).0
            }
        };
        Ok(template
            .iter()
            .map(|(name, value)| (name.clone(), value.clone()))
            .collect())
    }

    /// Derive the rewrite rules: three per active relation kind, in
    /// first-occurrence order of the kinds.
    pub fn derive_rules(&self) -> Vec<RewriteRule> {
        let mut rules = Vec::with_capacity(self.active_kinds.len() * RuleShape::ALL.len());
        for &kind in &self.active_kinds {
            let (src_kind, dst_kind) = self.endpoint_kinds(kind);
            let (edge_props, edge_time) = self.edge_template(kind);
            for shape in RuleShape::ALL {
                let spawned = match shape {
                    RuleShape::GrowSource => Some(src_kind),
                    RuleShape::GrowTarget => Some(dst_kind),
                    RuleShape::ConnectExisting => None,
                };
                let (node_props, node_start, node_end) = match spawned {
                    Some(NodeKind::Activity) => (
                        self.node_template(NodeKind::Activity).clone(),
                        self.activity_start.clone(),
                        self.activity_end.clone(),
                    ),
                    Some(k) => (self.node_template(k).clone(), None, None),
                    None => (PropMap::new(), None, None),
                };
                rules.push(RewriteRule {
                    kind,
                    shape,
                    src_kind,
                    dst_kind,
                    edge_props: edge_props.clone(),
                    edge_time: edge_time.cloned(),
                    node_props,
                    node_start,
                    node_end,
                });
            }
        }
        rules
    }

    /// Endpoint kinds for rules of one relation kind. Fixed signature sides
    /// win; an `Any` side falls back to the first seed statement's actual
    /// endpoint kind.
    fn endpoint_kinds(&self, kind: RelationKind) -> (NodeKind, NodeKind) {
        let instance = self.edges.iter().find(|e| e.kind == kind);
        let lookup = |id: &str| self.nodes.get(id).map(|n| n.kind);
        let src = kind
            .source_kind()
            .or_else(|| instance.and_then(|e| lookup(&e.src)))
            .unwrap_or(NodeKind::Entity);
        let dst = kind
            .target_kind()
            .or_else(|| instance.and_then(|e| lookup(&e.dst)))
            .unwrap_or(NodeKind::Entity);
        (src, dst)
    }

    /// Instantiate the seed itself as a graph: nodes in declaration order,
    /// then edges in statement order.
    pub fn materialize(&self) -> Result<ProvGraph, GraphError> {
        let mut graph = ProvGraph::new();
        let mut ids = IndexMap::new();
        for (local, node) in &self.nodes {
            let id = graph.add_node(node.kind, node.props.clone());
            graph.set_activity_times(id, node.start.clone(), node.end.clone())?;
            ids.insert(local.clone(), id);
        }
        for edge in &self.edges {
            let src = ids[&edge.src];
            let dst = ids[&edge.dst];
            graph.add_edge_timed(edge.kind, src, dst, edge.props.clone(), edge.time.clone())?;
        }
        Ok(graph)
    }
}

fn merge_props(into: &mut PropMap, from: &PropMap, scope: &str, warnings: &mut Vec<SeedWarning>) {
    for (name, value) in from {
        match into.get(name) {
            None => {
                into.insert(name.clone(), value.clone());
            }
            Some(existing) if existing == value => {}
            Some(existing) => warnings.push(SeedWarning::PropertyConflict {
                scope: scope.to_string(),
                name: name.clone(),
                kept: existing.clone(),
                ignored: value.clone(),
            }),
        }
    }
}
