//! Evaluation statistics over graph collections, and control-vs-test
//! comparison reports.
//!
//! All statistics are computed over the pooled population (every
//! observation across the whole collection counts once); per-graph
//! normalization is reported alongside as the mean of per-graph means,
//! since published aggregate figures do not say which normalization they
//! use. Standard deviations are population standard deviations (divide
//! by N).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::graph::{Direction, NodeId, ProvGraph};
use crate::model::{NodeKind, RelationKind};

pub const DEFAULT_TITLE_PROPERTY: &str = "ex:title";

/// Summary statistics over a population of non-negative integer counts.
/// An empty population reports zeros and an empty histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub population: u64,
    pub mean: f64,
    pub std_dev: f64,
    pub min: u64,
    pub max: u64,
    /// count value -> number of observations with that value.
    pub histogram: BTreeMap<u64, u64>,
}

impl Stat {
    pub fn from_counts(counts: &[u64]) -> Stat {
        if counts.is_empty() {
            return Stat {
                population: 0,
                mean: 0.0,
                std_dev: 0.0,
                min: 0,
                max: 0,
                histogram: BTreeMap::new(),
            };
        }
        // Integer summation and histogram-order accumulation keep the
        // result independent of observation order, so reports compare
        // bit-equal under permutation.
        let n = counts.len() as f64;
        let total: u128 = counts.iter().map(|&c| u128::from(c)).sum();
        let mean = total as f64 / n;
        let mut histogram = BTreeMap::new();
        for &c in counts {
            *histogram.entry(c).or_insert(0) += 1;
        }
        let var = histogram
            .iter()
            .map(|(&value, &freq)| {
                let d = value as f64 - mean;
                freq as f64 * d * d
            })
            .sum::<f64>()
            / n;
        Stat {
            population: counts.len() as u64,
            mean,
            std_dev: var.sqrt(),
            min: *counts.iter().min().expect("nonempty"),
            max: *counts.iter().max().expect("nonempty"),
            histogram,
        }
    }
}

/// One metric under both normalizations: the pooled population statistic
/// and the mean of per-graph means (graphs contributing no observations
/// are skipped; None when no graph contributes any).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub pooled: Stat,
    pub per_graph_mean: Option<f64>,
}

impl Metric {
    fn from_groups(groups: &[Vec<u64>]) -> Metric {
        let all: Vec<u64> = groups.iter().flatten().copied().collect();
        let mut means: Vec<f64> = groups
            .iter()
            .filter(|g| !g.is_empty())
            .map(|g| g.iter().map(|&c| u128::from(c)).sum::<u128>() as f64 / g.len() as f64)
            .collect();
        // Canonical summation order keeps the average of per-graph means
        // independent of collection order.
        means.sort_by(f64::total_cmp);
        Metric {
            pooled: Stat::from_counts(&all),
            per_graph_mean: if means.is_empty() {
                None
            } else {
                Some(means.iter().sum::<f64>() / means.len() as f64)
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeMetric {
    pub kind: NodeKind,
    /// "in", "out", or "total".
    pub direction: String,
    pub stat: Stat,
}

/// Longest-path shape of one graph; `None` height/width marks a cyclic
/// graph, which has no finite longest path. Entries are sorted by
/// (nodes, edges, height, width) so reports are invariant to collection
/// order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GraphShape {
    pub nodes: u64,
    pub edges: u64,
    pub height: Option<u32>,
    pub width: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub graphs: u64,
    pub total_nodes: u64,
    pub total_edges: u64,
    /// Property name that defines a contribution's identity.
    pub title_property: String,
    /// Incident Used edges per Entity.
    pub usages_per_entity: Metric,
    /// Incident WasAssociatedWith edges per Agent.
    pub associations_per_agent: Metric,
    /// Distinct title values among entities generated by the agent's
    /// associated activities; absent when no entity in the collection
    /// carries the title property at all.
    pub contributions_per_agent: Option<Metric>,
    pub degrees: Vec<DegreeMetric>,
    pub shapes: Vec<GraphShape>,
    pub cyclic_graphs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub control: f64,
    pub test: f64,
    pub absolute: f64,
    /// None when the control value is 0 (relative change undefined).
    pub relative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<MetricDelta>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum MetricsError {
    #[error("graph {graph} fails validation with {violations} violation(s)")]
    InvalidGraph { graph: usize, violations: usize },
    #[error("reports use different metric definitions: {detail}")]
    MetricMismatch { detail: String },
}

fn incident_count(graph: &ProvGraph, node: NodeId, kind: RelationKind) -> u64 {
    graph
        .degree(node, Direction::Both, Some(kind))
        .map(u64::from)
        .expect("node taken from this graph")
}

/// Distinct title values among entities generated by the agent's
/// associated activities: Agent <- WasAssociatedWith - Activity
/// <- WasGeneratedBy - Entity.
fn contribution_count(graph: &ProvGraph, agent: NodeId, title: &str) -> u64 {
    let mut titles: BTreeSet<String> = BTreeSet::new();
    for &waw in graph.incoming_edges(agent) {
        let edge = graph.edge(waw).expect("consistent adjacency");
        if edge.kind != RelationKind::WasAssociatedWith {
            continue;
        }
        let activity = edge.src;
        for &wgb in graph.incoming_edges(activity) {
            let gen = graph.edge(wgb).expect("consistent adjacency");
            if gen.kind != RelationKind::WasGeneratedBy {
                continue;
            }
            let entity = graph.node(gen.src).expect("consistent adjacency");
            if let Some(value) = entity.props.get(title) {
                titles.insert(value.provn_literal());
            }
        }
    }
    titles.len() as u64
}

pub fn compute_metrics(graphs: &[ProvGraph]) -> Result<MetricsReport, MetricsError> {
    compute_metrics_with_title(graphs, DEFAULT_TITLE_PROPERTY)
}

pub fn compute_metrics_with_title(
    graphs: &[ProvGraph],
    title: &str,
) -> Result<MetricsReport, MetricsError> {
    for (i, g) in graphs.iter().enumerate() {
        let violations = g.validate();
        if !violations.is_empty() {
            return Err(MetricsError::InvalidGraph {
                graph: i,
                violations: violations.len(),
            });
        }
    }

    let mut usage_groups = Vec::with_capacity(graphs.len());
    let mut assoc_groups = Vec::with_capacity(graphs.len());
    let mut contrib_groups = Vec::with_capacity(graphs.len());
    let mut title_seen = false;
    // degree_groups[kind][direction] holds one group per graph.
    let mut degree_groups: Vec<Vec<Vec<Vec<u64>>>> = vec![vec![Vec::new(); 3]; NodeKind::ALL.len()];
    let mut shapes = Vec::with_capacity(graphs.len());
    let mut cyclic = 0u64;

    for g in graphs {
        let mut usages = Vec::new();
        let mut assocs = Vec::new();
        let mut contribs = Vec::new();
        let mut degrees: Vec<[Vec<u64>; 3]> = vec![Default::default(); NodeKind::ALL.len()];
        for node in g.nodes() {
            if node.props.contains_key(title) {
                title_seen = true;
            }
            match node.kind {
                NodeKind::Entity => {
                    usages.push(incident_count(g, node.id, RelationKind::Used));
                }
                NodeKind::Agent => {
                    assocs.push(incident_count(g, node.id, RelationKind::WasAssociatedWith));
                    contribs.push(contribution_count(g, node.id, title));
                }
                NodeKind::Activity => {}
            }
            let slot = &mut degrees[node.kind as usize];
            for (di, dir) in [Direction::In, Direction::Out, Direction::Both]
                .into_iter()
                .enumerate()
            {
                slot[di].push(u64::from(
                    g.degree(node.id, dir, None).expect("node from this graph"),
                ));
            }
        }
        usage_groups.push(usages);
        assoc_groups.push(assocs);
        contrib_groups.push(contribs);
        for (ki, kind_degrees) in degrees.into_iter().enumerate() {
            for (di, group) in kind_degrees.into_iter().enumerate() {
                degree_groups[ki][di].push(group);
            }
        }
        match g.height_width() {
            Ok((h, w)) => shapes.push(GraphShape {
                nodes: g.node_count() as u64,
                edges: g.edge_count() as u64,
                height: Some(h),
                width: Some(w),
            }),
            Err(_) => {
                cyclic += 1;
                shapes.push(GraphShape {
                    nodes: g.node_count() as u64,
                    edges: g.edge_count() as u64,
                    height: None,
                    width: None,
                });
            }
        }
    }
    shapes.sort();

    let dir_names = ["in", "out", "total"];
    let mut degree_metrics = Vec::with_capacity(9);
    for (ki, kind) in NodeKind::ALL.into_iter().enumerate() {
        for (di, name) in dir_names.into_iter().enumerate() {
            let all: Vec<u64> = degree_groups[ki][di].iter().flatten().copied().collect();
            degree_metrics.push(DegreeMetric {
                kind,
                direction: name.to_string(),
                stat: Stat::from_counts(&all),
            });
        }
    }

    Ok(MetricsReport {
        graphs: graphs.len() as u64,
        total_nodes: graphs.iter().map(|g| g.node_count() as u64).sum(),
        total_edges: graphs.iter().map(|g| g.edge_count() as u64).sum(),
        title_property: title.to_string(),
        usages_per_entity: Metric::from_groups(&usage_groups),
        associations_per_agent: Metric::from_groups(&assoc_groups),
        contributions_per_agent: if title_seen {
            Some(Metric::from_groups(&contrib_groups))
        } else {
            None
        },
        degrees: degree_metrics,
        shapes,
        cyclic_graphs: cyclic,
    })
}

fn delta(metric: &str, control: f64, test: f64) -> MetricDelta {
    MetricDelta {
        metric: metric.to_string(),
        control,
        test,
        absolute: test - control,
        relative: if control == 0.0 {
            None
        } else {
            Some((test - control) / control)
        },
    }
}

/// Per-metric deltas between a control and a test report. Both reports
/// must use the same metric definitions (title property, presence of the
/// contributions metric, degree breakdown).
pub fn compare(
    control: &MetricsReport,
    test: &MetricsReport,
) -> Result<ComparisonReport, MetricsError> {
    if control.title_property != test.title_property {
        return Err(MetricsError::MetricMismatch {
            detail: format!(
                "title property {:?} vs {:?}",
                control.title_property, test.title_property
            ),
        });
    }
    if control.contributions_per_agent.is_some() != test.contributions_per_agent.is_some() {
        return Err(MetricsError::MetricMismatch {
            detail: "contributions metric present in one report and absent in the other"
                .to_string(),
        });
    }
    let mut rows = vec![
        delta(
            "total nodes",
            control.total_nodes as f64,
            test.total_nodes as f64,
        ),
        delta(
            "total edges",
            control.total_edges as f64,
            test.total_edges as f64,
        ),
        delta(
            "usages per entity (mean)",
            control.usages_per_entity.pooled.mean,
            test.usages_per_entity.pooled.mean,
        ),
        delta(
            "usages per entity (std dev)",
            control.usages_per_entity.pooled.std_dev,
            test.usages_per_entity.pooled.std_dev,
        ),
        delta(
            "associations per agent (mean)",
            control.associations_per_agent.pooled.mean,
            test.associations_per_agent.pooled.mean,
        ),
        delta(
            "associations per agent (std dev)",
            control.associations_per_agent.pooled.std_dev,
            test.associations_per_agent.pooled.std_dev,
        ),
    ];
    if let (Some(c), Some(t)) = (
        &control.contributions_per_agent,
        &test.contributions_per_agent,
    ) {
        rows.push(delta(
            "contributions per agent (mean)",
            c.pooled.mean,
            t.pooled.mean,
        ));
        rows.push(delta(
            "contributions per agent (std dev)",
            c.pooled.std_dev,
            t.pooled.std_dev,
        ));
    }
    for (c, t) in control.degrees.iter().zip(&test.degrees) {
        if c.kind != t.kind || c.direction != t.direction {
            return Err(MetricsError::MetricMismatch {
                detail: "degree metric breakdowns differ".to_string(),
            });
        }
        rows.push(delta(
            &format!("{} {} degree (mean)", c.kind.name(), c.direction),
            c.stat.mean,
            t.stat.mean,
        ));
    }
    Ok(ComparisonReport { rows })
}

fn fmt_value(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v:.4}")
    }
}

/// Aligned plain-text table of the headline metrics.
pub fn render_metrics_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    let mut row = |name: &str, value: String| {
        writeln!(out, "{name:<34} {value}").expect("string write");
    };
    row("graphs", report.graphs.to_string());
    row("total nodes", report.total_nodes.to_string());
    row("total edges", report.total_edges.to_string());
    row("cyclic graphs", report.cyclic_graphs.to_string());
    let mut metric = |name: &str, m: &Metric| {
        let s = &m.pooled;
        let per_graph = m
            .per_graph_mean
            .map(fmt_value)
            .unwrap_or_else(|| "-".to_string());
        writeln!(
            out,
            "{name:<34} mean {:>8}  std {:>8}  min {:>4}  max {:>4}  per-graph mean {per_graph}",
            fmt_value(s.mean),
            fmt_value(s.std_dev),
            s.min,
            s.max
        )
        .expect("string write");
    };
    metric("usages per entity", &report.usages_per_entity);
    metric("associations per agent", &report.associations_per_agent);
    match &report.contributions_per_agent {
        Some(m) => metric("contributions per agent", m),
        None => {
            writeln!(
                out,
                "{:<34} absent (no {:?} property in the collection)",
                "contributions per agent", report.title_property
            )
            .expect("string write");
        }
    }
    for d in &report.degrees {
        let name = format!("{} {} degree", d.kind.name(), d.direction);
        writeln!(
            out,
            "{name:<34} mean {:>8}  std {:>8}  min {:>4}  max {:>4}",
            fmt_value(d.stat.mean),
            fmt_value(d.stat.std_dev),
            d.stat.min,
            d.stat.max
        )
        .expect("string write");
    }
    out
}

/// Aligned plain-text table of comparison rows.
pub fn render_comparison_table(report: &ComparisonReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<34} {:>12} {:>12} {:>12} {:>12}",
        "metric", "control", "test", "delta", "relative"
    )
    .expect("string write");
    for r in &report.rows {
        let rel = r
            .relative
            .map(|v| format!("{:+.2}%", v * 100.0))
            .unwrap_or_else(|| "-".to_string());
        writeln!(
            out,
            "{:<34} {:>12} {:>12} {:>12} {:>12}",
            r.metric,
            fmt_value(r.control),
            fmt_value(r.test),
            fmt_value(r.absolute),
            rel
        )
        .expect("string write");
    }
    out
}
