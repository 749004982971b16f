//! Property-based checks across parsing, constraint evaluation, the
//! engine, and metrics.

use indexmap::IndexMap;
use proptest::prelude::*;

use provforge::io::{read_jsonl, write_jsonl};
use provforge::metrics::{compute_metrics, Stat};
use provforge::provn::{parse_graph, parse_seed, write_graph, write_seed};
use provforge::{
    candidates, condition_holds, generate, parse_constraints, render_constraints, sample_target,
    status_of, ApplyOutcome, Condition, ConditionExpr, Constraint, Determiner, Distribution,
    EdgeTemplate, Engine, ExecutionParams, NodeKind, NodeTemplate, PartnerBinding, Polarity,
    PropMap, PropValue, ProvGraph, Qualifier, QualifierRange, RelationKind, Requirement,
    RequirementStatus, RngStream, RuleShape, SeedPattern, Subject, Timestamp,
};

// ---------------------------------------------------------------------------
// Strategies

fn node_kind() -> impl Strategy<Value = NodeKind> {
    prop::sample::select(NodeKind::ALL.to_vec())
}

fn relation_kind() -> impl Strategy<Value = RelationKind> {
    prop::sample::select(RelationKind::ALL.to_vec())
}

fn prop_name() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "prov:type",
        "ex:fct",
        "ex:title",
        "ex.version",
        "note",
    ])
    .prop_map(str::to_string)
}

fn prop_value() -> impl Strategy<Value = PropValue> {
    prop_oneof![
        "[a-zA-Z0-9 :._-]{0,12}".prop_map(PropValue::Str),
        (-1_000_000_000i64..1_000_000_000).prop_map(PropValue::Int),
        (-1.0e6..1.0e6).prop_map(PropValue::Decimal),
        any::<bool>().prop_map(PropValue::Bool),
    ]
}

fn prop_map(max: usize) -> impl Strategy<Value = PropMap> {
    prop::collection::vec((prop_name(), prop_value()), 0..=max)
        .prop_map(|pairs| pairs.into_iter().collect())
}

fn timestamp() -> impl Strategy<Value = Timestamp> {
    prop::sample::select(vec![
        "2013-11-16T16:00:00",
        "2013-11-16T16:05:00",
        "2020-01-01T00:00:00",
    ])
    .prop_map(|s| Timestamp::parse(s).expect("pool holds valid timestamps"))
}

/// A structurally valid graph: edges respect the relation signature table,
/// and at most one outgoing WasGeneratedBy per entity (add_edge skips the
/// rest).
fn graph(max_nodes: usize, max_edges: usize) -> impl Strategy<Value = ProvGraph> {
    let nodes = prop::collection::vec((node_kind(), prop_map(2)), 1..=max_nodes);
    let edges = prop::collection::vec(
        (
            relation_kind(),
            any::<prop::sample::Index>(),
            any::<prop::sample::Index>(),
        ),
        0..=max_edges,
    );
    (nodes, edges).prop_map(|(nodes, edges)| {
        let mut g = ProvGraph::new();
        let mut kinds = Vec::with_capacity(nodes.len());
        for (kind, props) in nodes {
            kinds.push(kind);
            g.add_node(kind, props);
        }
        for (kind, si, di) in edges {
            let src = si.index(kinds.len());
            let dst = di.index(kinds.len());
            if src == dst || !kind.admits(kinds[src], kinds[dst]) {
                continue;
            }
            let _ = g.add_edge(
                kind,
                provforge::NodeId(src as u32),
                provforge::NodeId(dst as u32),
                PropMap::new(),
            );
        }
        g
    })
}

/// A seed pattern assembled from random declarations: unique local ids,
/// signature-correct edges, at most one generation per entity.
fn seed_pattern() -> impl Strategy<Value = SeedPattern> {
    let nodes = prop::collection::vec(
        (
            node_kind(),
            prop_map(2),
            prop::option::of((timestamp(), timestamp())),
        ),
        1..=6,
    );
    let edges = prop::collection::vec(
        (
            relation_kind(),
            any::<prop::sample::Index>(),
            any::<prop::sample::Index>(),
            prop_map(2),
            prop::option::of(timestamp()),
        ),
        0..=8,
    );
    (nodes, edges).prop_map(|(nodes, edges)| {
        let mut decls = IndexMap::new();
        let mut kinds = Vec::with_capacity(nodes.len());
        for (i, (kind, props, times)) in nodes.into_iter().enumerate() {
            let id = format!("n{i}");
            kinds.push(kind);
            let (start, end) = match (kind, times) {
                (NodeKind::Activity, Some((a, b))) => {
                    if a.as_str() <= b.as_str() {
                        (Some(a), Some(b))
                    } else {
                        (Some(b), Some(a))
                    }
                }
                _ => (None, None),
            };
            decls.insert(
                id.clone(),
                NodeTemplate {
                    local_id: id,
                    kind,
                    props,
                    start,
                    end,
                },
            );
        }
        let mut templates = Vec::new();
        let mut generated = Vec::new();
        for (kind, si, di, props, time) in edges {
            let src = si.index(kinds.len());
            let dst = di.index(kinds.len());
            if src == dst || !kind.admits(kinds[src], kinds[dst]) {
                continue;
            }
            if kind == RelationKind::WasGeneratedBy {
                if generated.contains(&src) {
                    continue;
                }
                generated.push(src);
            }
            templates.push(EdgeTemplate {
                kind,
                src: format!("n{src}"),
                dst: format!("n{dst}"),
                props,
                time,
            });
        }
        SeedPattern::assemble(decls, templates).0
    })
}

fn qualifier() -> impl Strategy<Value = Qualifier> {
    let range = prop_oneof![
        (0u64..=6).prop_map(QualifierRange::AtMost),
        (0u64..=6).prop_map(QualifierRange::AtLeast),
        (0u64..=6).prop_map(QualifierRange::Exactly),
        (0u64..=6, 0u64..=6).prop_map(|(a, b)| QualifierRange::Between(a.min(b), a.max(b))),
    ];
    let distribution = prop::option::of(prop_oneof![
        Just(Distribution::Uniform),
        (0.5f64..5.0, 0.1f64..4.0).prop_map(|(shape, scale)| Distribution::Gamma { shape, scale }),
        (0.0f64..10.0, 0.1f64..5.0)
            .prop_map(|(mean, std_dev)| Distribution::Normal { mean, std_dev }),
    ]);
    (range, distribution).prop_map(|(range, distribution)| Qualifier {
        range,
        // The grammar rejects a distribution over a single-point range.
        distribution: if matches!(range, QualifierRange::Exactly(_)) {
            None
        } else {
            distribution
        },
    })
}

fn requirement() -> impl Strategy<Value = Requirement> {
    prop_oneof![
        Just(Requirement::InDegree),
        Just(Requirement::OutDegree),
        Just(Requirement::Degree),
        relation_kind().prop_map(Requirement::HasRelationship),
        (prop_name(), prop_value())
            .prop_map(|(name, value)| Requirement::HasProperty { name, value }),
    ]
}

fn determiner() -> impl Strategy<Value = Determiner> {
    prop_oneof![
        node_kind().prop_map(|kind| Determiner::Variable { kind }),
        (node_kind(), prop::sample::select(vec!["a1", "n", "agentx"])).prop_map(|(kind, var)| {
            Determiner::Invariable {
                kind,
                var: var.to_string(),
            }
        }),
    ]
}

fn condition_expr(det_var: Option<String>) -> impl Strategy<Value = ConditionExpr> {
    let subject = match det_var {
        Some(v) => prop_oneof![Just(Subject::SelfNode), Just(Subject::Var(v))].boxed(),
        None => Just(Subject::SelfNode).boxed(),
    };
    let binding = prop::option::of(
        (node_kind(), prop::sample::select(vec!["p1", "p2", "x"])).prop_map(|(kind, var)| {
            PartnerBinding {
                kind,
                var: var.to_string(),
            }
        }),
    );
    let leaf = prop_oneof![
        (subject.clone(), relation_kind(), binding).prop_map(|(subject, kind, binds)| {
            ConditionExpr::HasRelationship {
                subject,
                kind,
                binds,
            }
        }),
        (subject, prop_name(), prop_value()).prop_map(|(subject, name, value)| {
            ConditionExpr::HasProperty {
                subject,
                name,
                value,
            }
        }),
    ];
    leaf.prop_recursive(3, 10, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| ConditionExpr::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| ConditionExpr::Or(Box::new(a), Box::new(b))),
        ]
    })
}

fn constraint() -> impl Strategy<Value = Constraint> {
    (determiner(), requirement(), qualifier()).prop_flat_map(|(det, req, qual)| {
        let det_var = det.var().map(str::to_string);
        let condition = prop::option::of(
            (
                prop_oneof![Just(Polarity::When), Just(Polarity::Unless)],
                condition_expr(det_var),
            )
                .prop_map(|(polarity, expr)| Condition { polarity, expr }),
        );
        condition.prop_map(move |condition| Constraint {
            determiner: det.clone(),
            requirement: req.clone(),
            qualifier: qual.clone(),
            condition,
        })
    })
}

// ---------------------------------------------------------------------------
// Round trips

proptest! {
    #[test]
    fn constraint_render_parse_round_trip(cs in prop::collection::vec(constraint(), 1..4)) {
        let text = render_constraints(&cs);
        let parsed = parse_constraints(&text)
            .unwrap_or_else(|e| panic!("rendered text failed to parse: {e}\n{text}"));
        prop_assert_eq!(cs, parsed);
    }

    #[test]
    fn seed_write_parse_write_is_a_fixed_point(seed in seed_pattern()) {
        let text1 = write_seed(&seed);
        let (reparsed, _) = parse_seed(&text1)
            .unwrap_or_else(|e| panic!("serialized seed failed to parse: {e}\n{text1}"));
        let text2 = write_seed(&reparsed);
        prop_assert_eq!(&text1, &text2);
        prop_assert_eq!(&seed.active_kinds, &reparsed.active_kinds);
    }

    #[test]
    fn graph_serializations_round_trip(g in graph(8, 16)) {
        let provn = write_graph(&g);
        let back = parse_graph(&provn)
            .unwrap_or_else(|e| panic!("serialized graph failed to parse: {e}\n{provn}"));
        prop_assert_eq!(provn, write_graph(&back));

        let jsonl = write_jsonl(&g);
        let back = read_jsonl(&jsonl).expect("serialized graph failed to load");
        prop_assert_eq!(jsonl, write_jsonl(&back));
    }
}

// ---------------------------------------------------------------------------
// Seed rules

proptest! {
    #[test]
    fn three_rules_per_active_kind(seed in seed_pattern()) {
        let rules = seed.derive_rules();
        prop_assert_eq!(rules.len(), 3 * seed.active_kinds.len());
        for (i, rule) in rules.iter().enumerate() {
            prop_assert_eq!(rule.kind, seed.active_kinds[i / 3]);
            prop_assert_eq!(rule.shape, RuleShape::ALL[i % 3]);
        }
    }
}

// ---------------------------------------------------------------------------
// Graph accounting

proptest! {
    #[test]
    fn degree_decomposes_into_directions(g in graph(10, 24)) {
        use provforge::Direction;
        let mut in_sum = 0u64;
        let mut out_sum = 0u64;
        for node in g.nodes() {
            let d_in = g.degree(node.id, Direction::In, None).unwrap();
            let d_out = g.degree(node.id, Direction::Out, None).unwrap();
            let d_both = g.degree(node.id, Direction::Both, None).unwrap();
            prop_assert_eq!(d_both, d_in + d_out);
            for kind in RelationKind::ALL {
                let f_in = g.degree(node.id, Direction::In, Some(kind)).unwrap();
                let f_out = g.degree(node.id, Direction::Out, Some(kind)).unwrap();
                let f_both = g.degree(node.id, Direction::Both, Some(kind)).unwrap();
                prop_assert_eq!(f_both, f_in + f_out);
            }
            in_sum += u64::from(d_in);
            out_sum += u64::from(d_out);
        }
        prop_assert_eq!(in_sum, g.edge_count() as u64);
        prop_assert_eq!(out_sum, g.edge_count() as u64);
    }

    #[test]
    fn edge_insertion_never_decreases_height(
        g in graph(8, 12),
        kind in relation_kind(),
        si in any::<prop::sample::Index>(),
        di in any::<prop::sample::Index>(),
    ) {
        let Ok((h1, _)) = g.height_width() else { return Ok(()) };
        let mut g2 = g.clone();
        let src = provforge::NodeId(si.index(g.node_count()) as u32);
        let dst = provforge::NodeId(di.index(g.node_count()) as u32);
        if src == dst {
            return Ok(());
        }
        let (sk, dk) = (g.node(src).unwrap().kind, g.node(dst).unwrap().kind);
        if !kind.admits(sk, dk) || g2.add_edge(kind, src, dst, PropMap::new()).is_err() {
            return Ok(());
        }
        if let Ok((h2, _)) = g2.height_width() {
            prop_assert!(h2 >= h1, "height fell from {h1} to {h2}");
        }
    }
}

// ---------------------------------------------------------------------------
// Constraint semantics

proptest! {
    #[test]
    fn sample_target_stays_in_range(q in qualifier(), seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        for _ in 0..8 {
            let t = sample_target(&q, &mut rng);
            prop_assert!(t >= q.lo(), "target {t} below lower bound {}", q.lo());
            if let Some(hi) = q.hi() {
                prop_assert!(t <= hi, "target {t} above upper bound {hi}");
            }
        }
    }

    #[test]
    fn status_matches_its_definition_and_is_monotone(q in qualifier(), count in 0u64..20) {
        let expected = if count < q.lo() {
            RequirementStatus::BelowMinimum
        } else if q.hi().is_some_and(|hi| count >= hi) {
            RequirementStatus::AtMaximum
        } else {
            RequirementStatus::Satisfied
        };
        prop_assert_eq!(status_of(&q, count), expected);

        let rank = |s: RequirementStatus| match s {
            RequirementStatus::BelowMinimum => 0,
            RequirementStatus::Satisfied => 1,
            RequirementStatus::AtMaximum => 2,
        };
        prop_assert!(rank(status_of(&q, count)) <= rank(status_of(&q, count + 1)));
    }

    #[test]
    fn unless_is_the_negation_of_when(c in constraint(), g in graph(8, 16)) {
        let Some(cond) = c.condition.clone() else { return Ok(()) };
        let mut as_when = c.clone();
        as_when.condition = Some(Condition { polarity: Polarity::When, expr: cond.expr.clone() });
        let mut as_unless = c;
        as_unless.condition = Some(Condition { polarity: Polarity::Unless, expr: cond.expr });
        for &node in g.nodes_of_kind(as_when.determiner.kind()) {
            let when = condition_holds(&as_when, &g, node).unwrap();
            let unless = condition_holds(&as_unless, &g, node).unwrap();
            prop_assert_ne!(when, unless);
        }
    }
}

// ---------------------------------------------------------------------------
// Engine

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generation_emits_only_active_kinds(seed in seed_pattern(), rng_seed in any::<u64>()) {
        let params = ExecutionParams {
            graphs: 1,
            max_nodes: 25,
            max_edges: 40,
            rng_seed,
            ..ExecutionParams::default()
        };
        let (graphs, report) = generate(&seed, &[], &params).unwrap();
        prop_assert_eq!(graphs.len(), 1);
        let g = &graphs[0];
        prop_assert!(g.validate().is_empty());
        for edge in g.edges() {
            prop_assert!(
                seed.active_kinds.contains(&edge.kind),
                "{} generated but absent from the seed",
                edge.kind.name()
            );
        }
        prop_assert_eq!(report.graphs.len(), 1);
        prop_assert!(report.graphs[0].nodes as usize == g.node_count());
    }

    #[test]
    fn generation_is_deterministic(seed in seed_pattern(), rng_seed in any::<u64>()) {
        let params = ExecutionParams {
            graphs: 2,
            max_nodes: 20,
            max_edges: 30,
            rng_seed,
            ..ExecutionParams::default()
        };
        let (a, _) = generate(&seed, &[], &params).unwrap();
        let (b, _) = generate(&seed, &[], &params).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(write_jsonl(x), write_jsonl(y));
        }
    }

    #[test]
    fn inhibited_applications_leave_the_graph_untouched(
        seed in seed_pattern(),
        rng_seed in any::<u64>(),
        cap in 0u64..=1,
    ) {
        // A tight degree cap inhibits most applications after a few edges.
        let text = format!(
            "an Entity has degree at most {cap};\n\
             an Activity has degree at most {cap};\n\
             an Agent has degree at most {cap};\n"
        );
        let constraints = parse_constraints(&text).unwrap();
        let rules = seed.derive_rules();
        let params = ExecutionParams {
            graphs: 1,
            max_nodes: 30,
            max_edges: 30,
            rng_seed,
            ..ExecutionParams::default()
        };
        let mut engine = Engine::new(&rules, &constraints, &params, RngStream::new(rng_seed));
        if engine.plant_start_node(&seed).unwrap().is_none() {
            return Ok(());
        }
        let mut inhibited = 0;
        'outer: for round in 0..4 {
            for (ri, rule) in rules.iter().enumerate() {
                let bindings = candidates(rule, engine.graph());
                for binding in bindings.iter().take(3 + round) {
                    let before = write_jsonl(engine.graph());
                    match engine.apply(ri, binding, &seed).unwrap() {
                        ApplyOutcome::Inhibited(_) => {
                            inhibited += 1;
                            prop_assert_eq!(before, write_jsonl(engine.graph()));
                            if inhibited >= 8 {
                                break 'outer;
                            }
                        }
                        ApplyOutcome::Applied { .. } => {}
                    }
                }
            }
        }
        prop_assert!(engine.graph().validate().is_empty());
    }
}

// ---------------------------------------------------------------------------
// Metrics

proptest! {
    #[test]
    fn metrics_are_permutation_invariant(
        graphs in prop::collection::vec(graph(6, 12), 1..5),
        rotation in any::<prop::sample::Index>(),
    ) {
        let a = compute_metrics(&graphs).unwrap();
        let mut shuffled = graphs;
        let k = rotation.index(shuffled.len());
        shuffled.rotate_left(k);
        shuffled.reverse();
        let b = compute_metrics(&shuffled).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn stats_agree_with_naive_two_pass(counts in prop::collection::vec(0u64..60, 0..150)) {
        let stat = Stat::from_counts(&counts);
        prop_assert_eq!(stat.population, counts.len() as u64);
        prop_assert_eq!(stat.histogram.values().sum::<u64>(), stat.population);
        if counts.is_empty() {
            prop_assert_eq!(stat.mean, 0.0);
            prop_assert_eq!(stat.std_dev, 0.0);
            return Ok(());
        }
        let n = counts.len() as f64;
        let mean: f64 = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
        let var: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
        prop_assert!(close(stat.mean, mean), "mean {} vs naive {}", stat.mean, mean);
        prop_assert!(
            close(stat.std_dev, var.sqrt()),
            "std {} vs naive {}",
            stat.std_dev,
            var.sqrt()
        );
        prop_assert_eq!(stat.min, *counts.iter().min().unwrap());
        prop_assert_eq!(stat.max, *counts.iter().max().unwrap());
    }
}
