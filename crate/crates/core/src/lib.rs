//! Synthetic PROV provenance graph generation.
//!
//! The pipeline: parse a PROV-N seed pattern into rewrite rules, parse a
//! constraint file, then grow graphs by applying rules under constraint
//! admissibility until a budget or fixpoint halts the run. Finished graphs
//! can be serialized (PROV-N, JSON lines, openCypher CREATE scripts),
//! measured, and compared.

pub mod constraint;
pub mod cypher;
pub mod engine;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod model;
pub mod provn;
pub mod rng;
pub mod seed;

pub use constraint::{
    condition_holds, measured_count, parse_constraints, render_constraints, requirement_status,
    sample_target, status_of, Condition, ConditionExpr, Constraint, ConstraintError, Determiner,
    Distribution, PartnerBinding, Polarity, Qualifier, QualifierRange, Requirement,
    RequirementStatus, Subject,
};
pub use cypher::{
    compile_constraint, compile_rule, export_create_script, fragments_hold, merge_query,
    CompiledQuery, ConstraintFragments, CypherError, Dialect,
};
pub use engine::{
    candidates, generate, generate_one, halting_reason, ApplyOutcome, Binding, Engine, EngineError,
    ExecutionParams, GenerationReport, GraphReport, HaltingReason, InhibitCause,
};
pub use graph::{Direction, Edge, EdgeId, GraphError, Node, NodeId, ProvGraph, Violation};
pub use metrics::{
    compare, compute_metrics, compute_metrics_with_title, render_comparison_table,
    render_metrics_table, ComparisonReport, DegreeMetric, GraphShape, Metric, MetricDelta,
    MetricsError, MetricsReport, Stat,
};
pub use model::{NodeKind, PropMap, PropValue, RelationKind, Timestamp, TimestampError};
pub use provn::ParseError;
pub use rng::RngStream;
pub use seed::{
    EdgeTemplate, NodeTemplate, RewriteRule, RuleShape, SeedPattern, SeedWarning, TemplateError,
    TemplateKey,
};
