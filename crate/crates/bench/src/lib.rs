//! Shared fixtures for the criterion benchmarks.

use provforge::provn::parse_seed;
use provforge::{parse_constraints, Constraint, ExecutionParams, SeedPattern};

pub const REVISION_SEED: &str = include_str!("../../../fixtures/document-revision.provn");
pub const REVISION_CONSTRAINTS: &str =
    include_str!("../../../fixtures/document-revision.constraints");

pub fn revision_pattern() -> SeedPattern {
    parse_seed(REVISION_SEED).expect("bundled seed parses").0
}

pub fn revision_constraints() -> Vec<Constraint> {
    parse_constraints(REVISION_CONSTRAINTS).expect("bundled constraints parse")
}

/// One-graph budget of `nodes` with the edge headroom the revision
/// pattern needs.
pub fn params(nodes: u64) -> ExecutionParams {
    ExecutionParams {
        graphs: 1,
        max_nodes: nodes,
        max_edges: nodes + nodes / 2,
        max_height: None,
        max_width: None,
        rng_seed: 42,
    }
}
