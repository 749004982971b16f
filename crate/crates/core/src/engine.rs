//! The rewrite engine: grow a graph from a single start node by repeatedly
//! applying the seed-derived rules, under constraint admissibility.
//!
//! The outer loop makes round-robin passes over the rules in a fixed order,
//! one application attempt per rule per pass with a uniformly sampled
//! binding. Growth halts when both budgets are met or a full pass fires
//! nothing. If below-minimum requirements remain, a completion phase takes
//! over: budgets are lifted (user constraints outrank execution parameters)
//! and edges are added specifically at deficient nodes until the deficits
//! are gone or no step makes progress. A safety cap of 100 x max-nodes
//! total iterations guards against divergent constraint sets.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::constraint::{
    condition_holds, measured_count, requirement_status, sample_target, Condition, ConditionExpr,
    Constraint, Requirement, RequirementStatus,
};
use crate::graph::{EdgeId, NodeId, ProvGraph};
use crate::model::NodeKind;
use crate::rng::RngStream;
use crate::seed::{RewriteRule, RuleShape, SeedPattern};

/// Collection-level execution parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionParams {
    pub graphs: u64,
    pub max_nodes: u64,
    pub max_edges: u64,
    pub max_height: Option<u32>,
    pub max_width: Option<u32>,
    pub rng_seed: u64,
}

impl Default for ExecutionParams {
    fn default() -> ExecutionParams {
        ExecutionParams {
            graphs: 1,
            max_nodes: 100,
            max_edges: 150,
            max_height: None,
            max_width: None,
            rng_seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HaltingReason {
    NodeBudget,
    EdgeBudget,
    Quiescent,
    ConstraintCompletion,
    NonTerminating,
}

/// A rule application site: the anchor node of a grow rule, or the
/// endpoint pair of a connect rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    Anchor(NodeId),
    Pair(NodeId, NodeId),
}

/// Why a rule application was blocked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InhibitCause {
    /// Index of the first violated constraint, in file order.
    Constraint(usize),
    /// The edge would give an Entity a second generation.
    UniqueGeneration,
    /// The mutation would exceed max height (or create a directed cycle,
    /// which makes height unbounded).
    Height,
    /// The mutation would exceed max width.
    Width,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyOutcome {
    Applied { node: Option<NodeId>, edge: EdgeId },
    Inhibited(InhibitCause),
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum EngineError {
    #[error("the seed pattern declares no nodes, so there is no start kind")]
    EmptySeed,
    #[error("the seed's activity template ends before it starts")]
    InvalidSeedInterval,
    #[error("stale binding: the site is no longer valid on the current graph")]
    StaleBinding,
}

/// Per-graph generation trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphReport {
    pub index: u64,
    pub nodes: u64,
    pub edges: u64,
    /// Outer iterations: growth passes plus completion steps.
    pub iterations: u64,
    /// Fires per rule, keyed by rule label, in rule order.
    pub rule_fires: indexmap::IndexMap<String, u64>,
    /// Inhibitions per constraint, in file order.
    pub constraint_inhibitions: Vec<u64>,
    /// Applications blocked by the unique-generation invariant.
    pub structural_blocks: u64,
    /// Rule attempts skipped because a budget was already met.
    pub budget_blocks: u64,
    /// Applications blocked by max height/width.
    pub shape_blocks: u64,
    pub halting_reason: HaltingReason,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationReport {
    pub graphs: Vec<GraphReport>,
}

/// All bindings a rule admits on the current graph: anchor nodes for grow
/// rules; for connect rules, every correctly-kinded ordered pair of
/// distinct nodes not already joined by an edge of the rule's relation
/// kind (in either direction).
pub fn candidates(rule: &RewriteRule, graph: &ProvGraph) -> Vec<Binding> {
    match rule.shape {
        RuleShape::GrowSource => graph
            .nodes_of_kind(rule.dst_kind)
            .iter()
            .map(|&n| Binding::Anchor(n))
            .collect(),
        RuleShape::GrowTarget => graph
            .nodes_of_kind(rule.src_kind)
            .iter()
            .map(|&n| Binding::Anchor(n))
            .collect(),
        RuleShape::ConnectExisting => {
            let mut out = Vec::new();
            for &src in graph.nodes_of_kind(rule.src_kind) {
                for &dst in graph.nodes_of_kind(rule.dst_kind) {
                    if src != dst && !graph.connected_by(src, dst, rule.kind) {
                        out.push(Binding::Pair(src, dst));
                    }
                }
            }
            out
        }
    }
}

/// Classify why a finished graph stopped growing. Residual minima mean
/// inhibition starved the run before it could satisfy them, a quiescent
/// fixpoint; exceeded budgets mean the completion phase ran past them to
/// satisfy minima (constraint priority), and never coexist with residues
/// because a stuck completion rolls its overrun back; otherwise whichever
/// budget was reached names the halt, and anything else is quiescent.
pub fn halting_reason(
    graph: &ProvGraph,
    params: &ExecutionParams,
    constraints: &[Constraint],
) -> HaltingReason {
    let any_below = graph.nodes().any(|node| {
        constraints.iter().any(|c| {
            c.determiner.kind() == node.kind
                && condition_holds(c, graph, node.id).unwrap_or(false)
                && requirement_status(c, graph, node.id).ok()
                    == Some(RequirementStatus::BelowMinimum)
        })
    });
    if any_below {
        return HaltingReason::Quiescent;
    }
    let nodes = graph.node_count() as u64;
    let edges = graph.edge_count() as u64;
    if nodes > params.max_nodes || edges > params.max_edges {
        return HaltingReason::ConstraintCompletion;
    }
    if nodes >= params.max_nodes {
        return HaltingReason::NodeBudget;
    }
    if edges >= params.max_edges {
        return HaltingReason::EdgeBudget;
    }
    HaltingReason::Quiescent
}

/// How many partner-binding hops conditions can reach from their subject;
/// the admissibility sweep re-checks every node within this radius of a
/// mutation, because an edge elsewhere can flip a bound-variable condition
/// on a node it does not touch.
fn sweep_radius(constraints: &[Constraint]) -> u32 {
    constraints
        .iter()
        .filter_map(|c| c.condition.as_ref())
        .map(|cond: &Condition| count_bindings(&cond.expr))
        .max()
        .unwrap_or(0)
}

/// Upper bound on binding chain length: the total number of partner
/// bindings in the condition.
fn count_bindings(expr: &ConditionExpr) -> u32 {
    match expr {
        ConditionExpr::And(a, b) | ConditionExpr::Or(a, b) => count_bindings(a) + count_bindings(b),
        ConditionExpr::HasRelationship { binds, .. } => u32::from(binds.is_some()),
        ConditionExpr::HasProperty { .. } => 0,
    }
}

/// Rejection-sampling attempts for a connect binding per rule per pass.
const CONNECT_TRIES: u32 = 32;
/// Sampled partners tried per completion option before moving on.
const COMPLETION_TRIES: u32 = 8;

/// The per-graph generation state machine. Public so that single rule
/// applications can be driven and inspected directly; most callers use
/// [`generate`].
pub struct Engine<'a> {
    graph: ProvGraph,
    rules: &'a [RewriteRule],
    constraints: &'a [Constraint],
    params: &'a ExecutionParams,
    rng: RngStream,
    /// Sampled per-node target cardinalities, keyed by (node, constraint
    /// index); only constraints carrying a distribution get targets.
    targets: HashMap<(u32, u32), u64>,
    /// Longest-path depth per node; maintained only under shape limits.
    depths: Vec<u32>,
    level_counts: Vec<u32>,
    radius: u32,
    // Trace counters.
    fires: Vec<u64>,
    inhibitions: Vec<u64>,
    structural_blocks: u64,
    budget_blocks: u64,
    shape_blocks: u64,
    iterations: u64,
}

impl<'a> Engine<'a> {
    /// Fresh engine over an empty graph.
    pub fn new(
        rules: &'a [RewriteRule],
        constraints: &'a [Constraint],
        params: &'a ExecutionParams,
        rng: RngStream,
    ) -> Engine<'a> {
        Engine {
            graph: ProvGraph::new(),
            rules,
            constraints,
            params,
            rng,
            targets: HashMap::new(),
            depths: Vec::new(),
            level_counts: Vec::new(),
            radius: sweep_radius(constraints),
            fires: vec![0; rules.len()],
            inhibitions: vec![0; constraints.len()],
            structural_blocks: 0,
            budget_blocks: 0,
            shape_blocks: 0,
            iterations: 0,
        }
    }

    /// Engine over an existing graph; per-node targets for distribution
    /// constraints are sampled for every present node, in node order then
    /// constraint order.
    pub fn with_graph(
        rules: &'a [RewriteRule],
        constraints: &'a [Constraint],
        params: &'a ExecutionParams,
        rng: RngStream,
        graph: ProvGraph,
    ) -> Engine<'a> {
        let mut engine = Engine::new(rules, constraints, params, rng);
        engine.graph = graph;
        let ids: Vec<NodeId> = engine.graph.nodes().map(|n| n.id).collect();
        for id in ids {
            engine.sample_targets_for(id);
        }
        if engine.shape_limited() {
            engine.rebuild_depths();
        }
        engine
    }

    pub fn graph(&self) -> &ProvGraph {
        &self.graph
    }

    pub fn into_graph(self) -> ProvGraph {
        self.graph
    }

    fn shape_limited(&self) -> bool {
        self.params.max_height.is_some() || self.params.max_width.is_some()
    }

    fn rebuild_depths(&mut self) {
        // The engine never creates cycles while shape limits are on, so
        // existing graphs fed in must be acyclic too.
        let depths = self
            .graph
            .depths()
            .expect("shape-limited engine requires an acyclic graph");
        self.level_counts = vec![0; depths.iter().copied().max().unwrap_or(0) as usize + 1];
        for &d in &depths {
            self.level_counts[d as usize] += 1;
        }
        self.depths = depths;
    }

    /// Sample targets for a newly visible node; returns the count recorded
    /// so a rollback can remove them again.
    fn sample_targets_for(&mut self, node: NodeId) {
        let kind = self.graph.node(node).map(|n| n.kind);
        for (ci, c) in self.constraints.iter().enumerate() {
            if c.qualifier.distribution.is_some() && Some(c.determiner.kind()) == kind {
                let t = sample_target(&c.qualifier, &mut self.rng);
                self.targets.insert((node.0, ci as u32), t);
            }
        }
    }

    fn drop_targets_for(&mut self, node: NodeId) {
        for ci in 0..self.constraints.len() {
            self.targets.remove(&(node.0, ci as u32));
        }
    }

    /// The effective maximum for a (node, constraint): the sampled target
    /// when one exists, else the qualifier's upper bound (None means
    /// unbounded).
    fn effective_max(&self, node: NodeId, ci: usize) -> Option<u64> {
        self.targets
            .get(&(node.0, ci as u32))
            .copied()
            .or(self.constraints[ci].qualifier.hi())
    }

    /// The effective minimum: the sampled target when one exists, else the
    /// qualifier's lower bound.
    fn effective_min(&self, node: NodeId, ci: usize) -> u64 {
        self.targets
            .get(&(node.0, ci as u32))
            .copied()
            .unwrap_or_else(|| self.constraints[ci].qualifier.lo())
    }

    /// Post-state admissibility sweep around a mutation: every applicable
    /// constraint on every node within the binding radius of the touched
    /// nodes must not be past its effective maximum.
    fn sweep(&self, touched: &[NodeId]) -> Option<usize> {
        let mut frontier: Vec<NodeId> = touched.to_vec();
        let mut affected: Vec<NodeId> = touched.to_vec();
        for _ in 0..self.radius {
            let mut next = Vec::new();
            for &n in &frontier {
                for &eid in self
                    .graph
                    .incoming_edges(n)
                    .iter()
                    .chain(self.graph.outgoing_edges(n).iter())
                {
                    let edge = self.graph.edge(eid).expect("consistent adjacency");
                    let partner = if edge.src == n { edge.dst } else { edge.src };
                    if !affected.contains(&partner) {
                        affected.push(partner);
                        next.push(partner);
                    }
                }
            }
            frontier = next;
        }
        for (ci, c) in self.constraints.iter().enumerate() {
            for &node in &affected {
                let kind = self.graph.node(node).expect("touched node exists").kind;
                if c.determiner.kind() != kind {
                    continue;
                }
                if !condition_holds(c, &self.graph, node).unwrap_or(false) {
                    continue;
                }
                let count = measured_count(&c.requirement, &self.graph, node).expect("node exists");
                if let Some(max) = self.effective_max(node, ci) {
                    if count > max {
                        return Some(ci);
                    }
                }
            }
        }
        None
    }

    /// Raise depths after adding edge (src -> dst), keeping the undo log;
    /// fails when the new longest path exceeds max height, a level exceeds
    /// max width, or the edge closes a directed cycle.
    fn raise_depths(
        &mut self,
        src: NodeId,
        dst: NodeId,
        undo: &mut Vec<(u32, u32)>,
    ) -> Result<(), InhibitCause> {
        let max_h = self.params.max_height.unwrap_or(u32::MAX);
        let max_w = self.params.max_width.unwrap_or(u32::MAX);
        let mut stack = vec![(dst, self.depths[src.0 as usize] + 1)];
        while let Some((n, d)) = stack.pop() {
            let cur = self.depths[n.0 as usize];
            if cur >= d {
                continue;
            }
            if n == src {
                // A raise cascading back to the source means dst reaches
                // src, so the new edge closes a cycle.
                return Err(InhibitCause::Height);
            }
            if d > max_h {
                return Err(InhibitCause::Height);
            }
            undo.push((n.0, cur));
            self.level_counts[cur as usize] -= 1;
            if self.level_counts.len() <= d as usize {
                self.level_counts.resize(d as usize + 1, 0);
            }
            self.level_counts[d as usize] += 1;
            self.depths[n.0 as usize] = d;
            // Check after the move is fully recorded so the undo log can
            // roll it back uniformly.
            if self.level_counts[d as usize] > max_w {
                return Err(InhibitCause::Width);
            }
            for &eid in self.graph.outgoing_edges(n) {
                let next = self.graph.edge(eid).expect("consistent adjacency").dst;
                stack.push((next, d + 1));
            }
        }
        Ok(())
    }

    fn undo_depths(&mut self, undo: Vec<(u32, u32)>) {
        // Reverse order restores intermediate states correctly.
        for (node, old) in undo.into_iter().rev() {
            let cur = self.depths[node as usize];
            self.level_counts[cur as usize] -= 1;
            self.level_counts[old as usize] += 1;
            self.depths[node as usize] = old;
        }
    }

    fn binding_is_current(&self, rule: &RewriteRule, binding: &Binding) -> bool {
        match (rule.shape, binding) {
            (RuleShape::GrowSource, Binding::Anchor(n)) => {
                self.graph.node(*n).map(|x| x.kind) == Some(rule.dst_kind)
            }
            (RuleShape::GrowTarget, Binding::Anchor(n)) => {
                self.graph.node(*n).map(|x| x.kind) == Some(rule.src_kind)
            }
            (RuleShape::ConnectExisting, Binding::Pair(s, d)) => {
                *s != *d
                    && self.graph.node(*s).map(|x| x.kind) == Some(rule.src_kind)
                    && self.graph.node(*d).map(|x| x.kind) == Some(rule.dst_kind)
                    && !self.graph.connected_by(*s, *d, rule.kind)
            }
            _ => false,
        }
    }

    /// Create the start node: a single node of the seed's first-declared
    /// kind, carrying that kind's property template. If its own template
    /// properties already violate an applicable constraint, the graph
    /// stays empty.
    pub fn plant_start_node(
        &mut self,
        pattern: &SeedPattern,
    ) -> Result<Option<NodeId>, EngineError> {
        let kind = pattern.start_kind().ok_or(EngineError::EmptySeed)?;
        if let (Some(start), Some(end)) = pattern.activity_times() {
            if !start.is_before_or_equal(end) {
                return Err(EngineError::InvalidSeedInterval);
            }
        }
        let node = self.create_node(kind, pattern);
        if let Some(_violated) = self.sweep(&[node]) {
            self.drop_targets_for(node);
            if self.shape_limited() {
                self.level_counts[0] -= 1;
                self.depths.pop();
            }
            self.graph.pop_last_node();
            return Ok(None);
        }
        Ok(Some(node))
    }

    fn create_node(&mut self, kind: NodeKind, pattern: &SeedPattern) -> NodeId {
        let node = self
            .graph
            .add_node(kind, pattern.node_template(kind).clone());
        if kind == NodeKind::Activity {
            let (start, end) = pattern.activity_times();
            self.graph
                .set_activity_times(node, start.cloned(), end.cloned())
                .expect("seed interval was validated at parse time");
        }
        if self.shape_limited() {
            self.depths.push(0);
            if self.level_counts.is_empty() {
                self.level_counts.push(0);
            }
            self.level_counts[0] += 1;
        }
        self.sample_targets_for(node);
        node
    }

    /// One speculative rule application. Commits atomically on success;
    /// on inhibition the graph (and all engine state) is unchanged.
    pub fn apply(
        &mut self,
        rule_index: usize,
        binding: &Binding,
        pattern: &SeedPattern,
    ) -> Result<ApplyOutcome, EngineError> {
        let rule = &self.rules[rule_index];
        if !self.binding_is_current(rule, binding) {
            return Err(EngineError::StaleBinding);
        }
        // Unique generation is structural, checked before any mutation.
        let (src_known, dst_known) = match (rule.shape, binding) {
            (RuleShape::GrowSource, Binding::Anchor(n)) => (None, Some(*n)),
            (RuleShape::GrowTarget, Binding::Anchor(n)) => (Some(*n), None),
            (RuleShape::ConnectExisting, Binding::Pair(s, d)) => (Some(*s), Some(*d)),
            _ => unreachable!("binding_is_current filtered shape/binding mismatches"),
        };
        if rule.kind == crate::model::RelationKind::WasGeneratedBy {
            if let Some(src) = src_known {
                let already = self
                    .graph
                    .degree(src, crate::graph::Direction::Out, Some(rule.kind))
                    .expect("binding nodes exist");
                if already > 0 {
                    self.structural_blocks += 1;
                    return Ok(ApplyOutcome::Inhibited(InhibitCause::UniqueGeneration));
                }
            }
        }

        let new_node = rule
            .spawned_kind()
            .map(|kind| self.create_node(kind, pattern));
        let (src, dst) = match rule.shape {
            RuleShape::GrowSource => (new_node.expect("grow spawns"), dst_known.unwrap()),
            RuleShape::GrowTarget => (src_known.unwrap(), new_node.expect("grow spawns")),
            RuleShape::ConnectExisting => (src_known.unwrap(), dst_known.unwrap()),
        };
        let edge = self.graph.insert_edge_unchecked(
            rule.kind,
            src,
            dst,
            rule.edge_props.clone(),
            rule.edge_time.clone(),
        );

        let mut depth_undo = Vec::new();
        if self.shape_limited() {
            if let Err(cause) = self.raise_depths(src, dst, &mut depth_undo) {
                self.rollback(new_node, depth_undo);
                self.shape_blocks += 1;
                return Ok(ApplyOutcome::Inhibited(cause));
            }
            // raise_depths checks levels it moves nodes into; a spawned
            // source node stays at level 0, so its level needs a check too.
            if let Some(n) = new_node {
                let level = self.depths[n.0 as usize] as usize;
                if self.level_counts[level] > self.params.max_width.unwrap_or(u32::MAX) {
                    self.rollback(new_node, depth_undo);
                    self.shape_blocks += 1;
                    return Ok(ApplyOutcome::Inhibited(InhibitCause::Width));
                }
            }
        }

        if let Some(ci) = self.sweep(&[src, dst]) {
            self.rollback(new_node, depth_undo);
            self.inhibitions[ci] += 1;
            return Ok(ApplyOutcome::Inhibited(InhibitCause::Constraint(ci)));
        }

        self.fires[rule_index] += 1;
        Ok(ApplyOutcome::Applied {
            node: new_node,
            edge,
        })
    }

    fn rollback(&mut self, new_node: Option<NodeId>, depth_undo: Vec<(u32, u32)>) {
        self.undo_depths(depth_undo);
        self.graph.pop_last_edge();
        if let Some(n) = new_node {
            self.drop_targets_for(n);
            if self.shape_limited() {
                let d = self.depths.pop().expect("depth entry for new node");
                self.level_counts[d as usize] -= 1;
            }
            self.graph.pop_last_node();
        }
    }

    /// Uniformly sample one binding for a rule, or None when the rule has
    /// no candidates. Connect rules use rejection sampling over node pairs,
    /// which is uniform over valid pairs; a bounded number of tries keeps
    /// passes cheap on dense graphs.
    fn sample_binding(&mut self, rule: &RewriteRule) -> Option<Binding> {
        match rule.shape {
            RuleShape::GrowSource => {
                let anchors = self.graph.nodes_of_kind(rule.dst_kind);
                if anchors.is_empty() {
                    return None;
                }
                let i = self.rng.below(anchors.len() as u64) as usize;
                Some(Binding::Anchor(anchors[i]))
            }
            RuleShape::GrowTarget => {
                let anchors = self.graph.nodes_of_kind(rule.src_kind);
                if anchors.is_empty() {
                    return None;
                }
                let i = self.rng.below(anchors.len() as u64) as usize;
                Some(Binding::Anchor(anchors[i]))
            }
            RuleShape::ConnectExisting => {
                let n_src = self.graph.nodes_of_kind(rule.src_kind).len();
                let n_dst = self.graph.nodes_of_kind(rule.dst_kind).len();
                if n_src == 0 || n_dst == 0 {
                    return None;
                }
                for _ in 0..CONNECT_TRIES {
                    let s = self.graph.nodes_of_kind(rule.src_kind)
                        [self.rng.below(n_src as u64) as usize];
                    let d = self.graph.nodes_of_kind(rule.dst_kind)
                        [self.rng.below(n_dst as u64) as usize];
                    if s != d && !self.graph.connected_by(s, d, rule.kind) {
                        return Some(Binding::Pair(s, d));
                    }
                }
                None
            }
        }
    }

    fn node_budget_open(&self) -> bool {
        (self.graph.node_count() as u64) < self.params.max_nodes
    }

    fn edge_budget_open(&self) -> bool {
        (self.graph.edge_count() as u64) < self.params.max_edges
    }

    fn iteration_cap(&self) -> u64 {
        100 * self.params.max_nodes.max(1)
    }

    /// The growth phase: round-robin passes until budgets are met or a
    /// full pass fires nothing. Returns false if the safety cap tripped.
    fn grow(&mut self, pattern: &SeedPattern) -> bool {
        loop {
            if self.iterations >= self.iteration_cap() {
                return false;
            }
            self.iterations += 1;
            let mut fired = false;
            let rules = self.rules;
            for (ri, rule) in rules.iter().enumerate() {
                let grows = rule.spawned_kind().is_some();
                if !self.edge_budget_open() || (grows && !self.node_budget_open()) {
                    self.budget_blocks += 1;
                    continue;
                }
                let Some(binding) = self.sample_binding(rule) else {
                    continue;
                };
                if let ApplyOutcome::Applied { .. } = self
                    .apply(ri, &binding, pattern)
                    .expect("freshly sampled bindings are current")
                {
                    fired = true;
                }
            }
            let nodes_full = !self.node_budget_open();
            let edges_full = !self.edge_budget_open();
            if (nodes_full && edges_full) || !fired {
                return true;
            }
        }
    }

    /// All (node, constraint) pairs currently below their effective
    /// minimum, in node order then constraint order.
    fn deficits(&self) -> Vec<(NodeId, usize)> {
        let mut out = Vec::new();
        for node in self.graph.nodes() {
            for (ci, c) in self.constraints.iter().enumerate() {
                if c.determiner.kind() != node.kind {
                    continue;
                }
                if !condition_holds(c, &self.graph, node.id).unwrap_or(false) {
                    continue;
                }
                let count =
                    measured_count(&c.requirement, &self.graph, node.id).expect("node exists");
                if count < self.effective_min(node.id, ci) {
                    out.push((node.id, ci));
                }
            }
        }
        out
    }

    /// Rules able to raise `requirement`'s measured count at a node of the
    /// deficient kind, each with the role the node plays. Connect options
    /// come first: completion prefers wiring existing nodes before
    /// spawning new ones.
    fn completion_options(&self, requirement: &Requirement, kind: NodeKind) -> Vec<(usize, Role)> {
        let mut connects = Vec::new();
        let mut grows = Vec::new();
        for (ri, rule) in self.rules.iter().enumerate() {
            if let Requirement::HasRelationship(k) = requirement {
                if rule.kind != *k {
                    continue;
                }
            }
            let as_src = rule.src_kind == kind;
            let as_dst = rule.dst_kind == kind;
            let want_in = matches!(requirement, Requirement::InDegree);
            let want_out = matches!(requirement, Requirement::OutDegree);
            match rule.shape {
                RuleShape::ConnectExisting => {
                    if as_src && !want_in {
                        connects.push((ri, Role::Src));
                    }
                    if as_dst && !want_out {
                        connects.push((ri, Role::Dst));
                    }
                }
                // A grow-source rule anchors on the target kind: the
                // deficient node receives an incoming edge.
                RuleShape::GrowSource => {
                    if as_dst && !want_out {
                        grows.push((ri, Role::Dst));
                    }
                }
                RuleShape::GrowTarget => {
                    if as_src && !want_in {
                        grows.push((ri, Role::Src));
                    }
                }
            }
        }
        connects.extend(grows);
        connects
    }

    /// Try to add one edge incident to `node` that raises the deficient
    /// count. Returns true when an edge was committed.
    fn complete_one(&mut self, node: NodeId, ci: usize, pattern: &SeedPattern) -> bool {
        let kind = self.graph.node(node).expect("deficit node exists").kind;
        let requirement = self.constraints[ci].requirement.clone();
        for (ri, role) in self.completion_options(&requirement, kind) {
            let rule = &self.rules[ri];
            match rule.shape {
                RuleShape::ConnectExisting => {
                    let partner_kind = match role {
                        Role::Src => rule.dst_kind,
                        Role::Dst => rule.src_kind,
                    };
                    let pool = self.graph.nodes_of_kind(partner_kind);
                    if pool.is_empty() {
                        continue;
                    }
                    let len = pool.len() as u64;
                    for _ in 0..COMPLETION_TRIES {
                        let partner =
                            self.graph.nodes_of_kind(partner_kind)[self.rng.below(len) as usize];
                        let binding = match role {
                            Role::Src => Binding::Pair(node, partner),
                            Role::Dst => Binding::Pair(partner, node),
                        };
                        let rule_ref = &self.rules[ri];
                        if !self.binding_is_current(rule_ref, &binding) {
                            continue;
                        }
                        if let Ok(ApplyOutcome::Applied { .. }) = self.apply(ri, &binding, pattern)
                        {
                            return true;
                        }
                    }
                }
                _ => {
                    let binding = Binding::Anchor(node);
                    if !self.binding_is_current(&self.rules[ri], &binding) {
                        continue;
                    }
                    if let Ok(ApplyOutcome::Applied { .. }) = self.apply(ri, &binding, pattern) {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// The completion phase: satisfy below-minimum requirements with
    /// budgets lifted. Returns false if the safety cap tripped.
    fn complete(&mut self, pattern: &SeedPattern) -> bool {
        loop {
            let deficits = self.deficits();
            if deficits.is_empty() {
                return true;
            }
            let mut progressed = false;
            for (node, ci) in deficits {
                if self.iterations >= self.iteration_cap() {
                    return false;
                }
                // Re-check: earlier steps in this sweep may have fixed it.
                let still_short = {
                    let c = &self.constraints[ci];
                    condition_holds(c, &self.graph, node).unwrap_or(false)
                        && measured_count(&c.requirement, &self.graph, node).expect("node exists")
                            < self.effective_min(node, ci)
                };
                if !still_short {
                    continue;
                }
                self.iterations += 1;
                if self.complete_one(node, ci, pattern) {
                    progressed = true;
                }
            }
            if !progressed {
                return true;
            }
        }
    }

    fn over_budget(&self) -> bool {
        (self.graph.node_count() as u64) > self.params.max_nodes
            || (self.graph.edge_count() as u64) > self.params.max_edges
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            graph: self.graph.clone(),
            fires: self.fires.clone(),
            inhibitions: self.inhibitions.clone(),
            structural_blocks: self.structural_blocks,
            budget_blocks: self.budget_blocks,
            shape_blocks: self.shape_blocks,
        }
    }

    fn restore(&mut self, checkpoint: Checkpoint) {
        self.graph = checkpoint.graph;
        self.fires = checkpoint.fires;
        self.inhibitions = checkpoint.inhibitions;
        self.structural_blocks = checkpoint.structural_blocks;
        self.budget_blocks = checkpoint.budget_blocks;
        self.shape_blocks = checkpoint.shape_blocks;
    }

    /// Run the full generation loop and consume the engine.
    pub fn run(
        mut self,
        pattern: &SeedPattern,
        index: u64,
    ) -> Result<(ProvGraph, GraphReport), EngineError> {
        let planted = self.plant_start_node(pattern)?;
        let mut capped = false;
        if planted.is_some() {
            capped = !self.grow(pattern);
            if !capped && !self.deficits().is_empty() {
                // Budgets may be exceeded only in service of minima that
                // actually get satisfied. A completion that sticks with
                // residual deficits rolls its overrun back, so stuck runs
                // stay inside budgets and classify as quiescent.
                let checkpoint = self.checkpoint();
                capped = !self.complete(pattern);
                if !capped && self.over_budget() && !self.deficits().is_empty() {
                    self.restore(checkpoint);
                }
            }
        }
        let reason = if capped {
            HaltingReason::NonTerminating
        } else {
            halting_reason(&self.graph, self.params, self.constraints)
        };
        let rule_fires = self
            .rules
            .iter()
            .zip(&self.fires)
            .map(|(r, &f)| (r.label(), f))
            .collect();
        let report = GraphReport {
            index,
            nodes: self.graph.node_count() as u64,
            edges: self.graph.edge_count() as u64,
            iterations: self.iterations,
            rule_fires,
            constraint_inhibitions: self.inhibitions.clone(),
            structural_blocks: self.structural_blocks,
            budget_blocks: self.budget_blocks,
            shape_blocks: self.shape_blocks,
            halting_reason: reason,
        };
        Ok((self.graph, report))
    }
}

#[derive(Clone, Copy)]
enum Role {
    Src,
    Dst,
}

/// Pre-completion engine state, restored when a stuck completion would
/// otherwise leave the graph over budget.
struct Checkpoint {
    graph: ProvGraph,
    fires: Vec<u64>,
    inhibitions: Vec<u64>,
    structural_blocks: u64,
    budget_blocks: u64,
    shape_blocks: u64,
}

/// Generate one graph of a collection; `index` selects the derived rng
/// stream, so distinct indices are independent and the whole collection is
/// reproducible from the master seed.
pub fn generate_one(
    pattern: &SeedPattern,
    constraints: &[Constraint],
    params: &ExecutionParams,
    index: u64,
) -> Result<(ProvGraph, GraphReport), EngineError> {
    let rules = pattern.derive_rules();
    let rng = RngStream::for_graph(params.rng_seed, index);
    let engine = Engine::new(&rules, constraints, params, rng);
    engine.run(pattern, index)
}

/// Generate the full collection sequentially.
pub fn generate(
    pattern: &SeedPattern,
    constraints: &[Constraint],
    params: &ExecutionParams,
) -> Result<(Vec<ProvGraph>, GenerationReport), EngineError> {
    let mut graphs = Vec::new();
    let mut reports = Vec::new();
    for i in 0..params.graphs {
        let (g, r) = generate_one(pattern, constraints, params, i)?;
        graphs.push(g);
        reports.push(r);
    }
    Ok((graphs, GenerationReport { graphs: reports }))
}
