//! Compile rewrite rules and constraints to openCypher text, and export
//! finished graphs as CREATE scripts.
//!
//! This is a text emitter only: nothing here talks to a database. Rules
//! become MATCH/CREATE statements, constraints become WHERE predicates
//! (plus auxiliary MATCH clauses for degree guards), and the two merge
//! into complete generation queries. Anything a constraint expresses that
//! has no rendering as a creation guard is surfaced in `notes` rather
//! than silently dropped.
//!
//! [`fragments_hold`] is a small reference evaluator for the emitted
//! fragment subset. It works from the emitted text, not the constraint
//! AST, so differential tests can check the compiled form against the
//! DSL evaluator through two independent paths.

use std::fmt::Write as _;

use crate::constraint::{Condition, ConditionExpr, Constraint, Polarity, Requirement, Subject};
use crate::graph::{Direction, NodeId, ProvGraph};
use crate::model::{NodeKind, PropMap, PropValue, RelationKind, Timestamp};
use crate::seed::{RewriteRule, RuleShape};

/// Guard predicate style. `Inline` writes `NOT count(r) >= n` against an
/// auxiliary MATCH, which some engines reject (aggregation in WHERE);
/// `Strict` writes `NOT size(<pattern>) >= n` with no auxiliary clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dialect {
    #[default]
    Inline,
    Strict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledQuery {
    /// Label of the rule the query implements.
    pub rule: String,
    pub text: String,
    /// Variables the text binds, in order of appearance.
    pub variables: Vec<String>,
    /// Constraint parts the merged query cannot express.
    pub notes: Vec<String>,
}

/// A constraint compiled to composable query pieces. `match_fragments`
/// are full auxiliary MATCH clauses; `where_fragments` are predicates to
/// conjoin; `notes` list every part of the constraint that a creation
/// guard cannot express.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintFragments {
    pub kind: NodeKind,
    pub match_fragments: Vec<String>,
    pub where_fragments: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum CypherError {
    #[error("no query rendering for {construct}: {detail}")]
    UnsupportedConstruct { construct: String, detail: String },
    #[error("graph fails validation with {violations} violation(s)")]
    InvalidGraph { violations: usize },
}

fn unsupported(construct: &str, detail: impl Into<String>) -> CypherError {
    CypherError::UnsupportedConstruct {
        construct: construct.to_string(),
        detail: detail.into(),
    }
}

/// Qualified property names are emitted with ":" replaced by "_"
/// (ex:name renders as ex_name).
pub fn mangle(name: &str) -> String {
    name.replace(':', "_")
}

fn render_prop_entries(props: &PropMap) -> Vec<String> {
    props
        .iter()
        .map(|(k, v)| format!("{}: {}", mangle(k), v.cypher_literal()))
        .collect()
}

fn braces(entries: Vec<String>) -> String {
    if entries.is_empty() {
        "{}".to_string()
    } else {
        format!("{{{}}}", entries.join(", "))
    }
}

fn render_edge_props(props: &PropMap, time: Option<&Timestamp>) -> String {
    let mut entries = render_prop_entries(props);
    if let Some(t) = time {
        entries.push(format!("_time: \"{}\"", t.as_str()));
    }
    braces(entries)
}

fn render_spawn_props(rule: &RewriteRule) -> String {
    let mut entries = render_prop_entries(&rule.node_props);
    if let Some(t) = &rule.node_start {
        entries.push(format!("_start: \"{}\"", t.as_str()));
    }
    if let Some(t) = &rule.node_end {
        entries.push(format!("_end: \"{}\"", t.as_str()));
    }
    braces(entries)
}

/// The rule's base MATCH clause, CREATE clause, and anchor variables
/// (variable name, node kind).
fn rule_parts(rule: &RewriteRule) -> (String, String, Vec<(&'static str, NodeKind)>) {
    let rel = rule.kind.cypher_name();
    let eprops = render_edge_props(&rule.edge_props, rule.edge_time.as_ref());
    match rule.shape {
        RuleShape::GrowTarget => (
            format!("MATCH (a:{} {{}})", rule.src_kind.name()),
            format!(
                "CREATE (a)-[:{rel} {eprops}]->(:{} {})",
                rule.dst_kind.name(),
                render_spawn_props(rule)
            ),
            vec![("a", rule.src_kind)],
        ),
        RuleShape::GrowSource => (
            format!("MATCH (a:{} {{}})", rule.dst_kind.name()),
            format!(
                "CREATE (a)<-[:{rel} {eprops}]-(:{} {})",
                rule.src_kind.name(),
                render_spawn_props(rule)
            ),
            vec![("a", rule.dst_kind)],
        ),
        RuleShape::ConnectExisting => (
            format!(
                "MATCH (a:{} {{}}), (b:{} {{}})",
                rule.src_kind.name(),
                rule.dst_kind.name()
            ),
            format!("CREATE (a)-[:{rel} {eprops}]->(b)"),
            vec![("a", rule.src_kind), ("b", rule.dst_kind)],
        ),
    }
}

/// Compile one rewrite rule to its generation query.
pub fn compile_rule(rule: &RewriteRule) -> CompiledQuery {
    let (m, c, anchors) = rule_parts(rule);
    CompiledQuery {
        rule: rule.label(),
        text: format!("{m} {c}"),
        variables: anchors.iter().map(|(v, _)| v.to_string()).collect(),
        notes: Vec::new(),
    }
}

/// Allocates guard variables r, r2, r3, ... across one query.
struct GuardVars {
    next: u32,
}

impl GuardVars {
    fn new() -> GuardVars {
        GuardVars { next: 1 }
    }

    fn take(&mut self) -> String {
        let n = self.next;
        self.next += 1;
        if n == 1 {
            "r".to_string()
        } else {
            format!("r{n}")
        }
    }
}

fn is_reserved_var(name: &str) -> bool {
    name == "a"
        || name == "b"
        || (name.starts_with('r') && name[1..].chars().all(|c| c.is_ascii_digit()))
}

/// The undirected/directed pattern a guard counts, without a guard var.
fn guard_pattern(requirement: &Requirement, anchor: &str, var: &str) -> String {
    let v = if var.is_empty() {
        String::new()
    } else {
        var.to_string()
    };
    match requirement {
        Requirement::InDegree => format!("()-[{v}]->({anchor})"),
        Requirement::OutDegree => format!("({anchor})-[{v}]->()"),
        Requirement::Degree => format!("({anchor})-[{v}]-()"),
        Requirement::HasRelationship(k) => format!("({anchor})-[{v}:{}]-()", k.cypher_name()),
        Requirement::HasProperty { .. } => unreachable!("property guards never count patterns"),
    }
}

fn expr_has_binding(expr: &ConditionExpr) -> bool {
    match expr {
        ConditionExpr::And(a, b) | ConditionExpr::Or(a, b) => {
            expr_has_binding(a) || expr_has_binding(b)
        }
        ConditionExpr::HasRelationship { binds, .. } => binds.is_some(),
        ConditionExpr::HasProperty { .. } => false,
    }
}

fn subject_var<'a>(
    subject: &'a Subject,
    anchor: &'a str,
    det_var: Option<&str>,
) -> Result<&'a str, CypherError> {
    match subject {
        Subject::SelfNode => Ok(anchor),
        // The invariable determiner's own variable is the anchor itself.
        Subject::Var(v) if det_var == Some(v.as_str()) => Ok(anchor),
        Subject::Var(v) => {
            if is_reserved_var(v) {
                Err(unsupported(
                    "condition variable",
                    format!("variable {v:?} collides with a reserved query variable"),
                ))
            } else {
                Ok(v)
            }
        }
    }
}

/// Render a binding-free expression as an inline predicate. Compound
/// children of a different operator get parentheses.
fn render_predicate(
    expr: &ConditionExpr,
    anchor: &str,
    det_var: Option<&str>,
) -> Result<String, CypherError> {
    fn child(
        e: &ConditionExpr,
        parent_or: bool,
        anchor: &str,
        det_var: Option<&str>,
    ) -> Result<String, CypherError> {
        let text = render_predicate(e, anchor, det_var)?;
        let needs_parens = match e {
            ConditionExpr::And(..) => parent_or,
            ConditionExpr::Or(..) => !parent_or,
            _ => false,
        };
        Ok(if needs_parens {
            format!("({text})")
        } else {
            text
        })
    }
    match expr {
        ConditionExpr::And(l, r) => Ok(format!(
            "{} AND {}",
            child(l, false, anchor, det_var)?,
            child(r, false, anchor, det_var)?
        )),
        ConditionExpr::Or(l, r) => Ok(format!(
            "{} OR {}",
            child(l, true, anchor, det_var)?,
            child(r, true, anchor, det_var)?
        )),
        ConditionExpr::HasRelationship { subject, kind, .. } => {
            let v = subject_var(subject, anchor, det_var)?;
            Ok(format!("({v})-[:{}]-()", kind.cypher_name()))
        }
        ConditionExpr::HasProperty {
            subject,
            name,
            value,
        } => {
            let v = subject_var(subject, anchor, det_var)?;
            Ok(format!("{v}.{} = {}", mangle(name), value.cypher_literal()))
        }
    }
}

/// Compile a When-condition, emitting partner bindings as shared-variable
/// MATCH fragments. Bindings are only expressible in a conjunctive
/// context, so any OR above a binding is rejected.
fn compile_when(
    expr: &ConditionExpr,
    anchor: &str,
    det_var: Option<&str>,
    matches: &mut Vec<String>,
    preds: &mut Vec<String>,
) -> Result<(), CypherError> {
    match expr {
        ConditionExpr::And(l, r) => {
            compile_when(l, anchor, det_var, matches, preds)?;
            compile_when(r, anchor, det_var, matches, preds)?;
            Ok(())
        }
        ConditionExpr::Or(..) if expr_has_binding(expr) => Err(unsupported(
            "condition",
            "a partner binding under OR has no query rendering",
        )),
        ConditionExpr::HasRelationship {
            subject,
            kind,
            binds: Some(binding),
        } => {
            let subj = subject_var(subject, anchor, det_var)?;
            if is_reserved_var(&binding.var) {
                return Err(unsupported(
                    "partner binding",
                    format!(
                        "variable {:?} collides with a reserved query variable",
                        binding.var
                    ),
                ));
            }
            matches.push(format!(
                "MATCH ({subj})-[:{}]-({}:{})",
                kind.cypher_name(),
                binding.var,
                binding.kind.name()
            ));
            Ok(())
        }
        _ => {
            preds.push(render_predicate(expr, anchor, det_var)?);
            Ok(())
        }
    }
}

fn compile_condition(
    cond: &Condition,
    anchor: &str,
    det_var: Option<&str>,
    out: &mut ConstraintFragments,
) -> Result<(), CypherError> {
    match cond.polarity {
        Polarity::When => {
            let mut preds = Vec::new();
            compile_when(
                &cond.expr,
                anchor,
                det_var,
                &mut out.match_fragments,
                &mut preds,
            )?;
            if !preds.is_empty() {
                out.where_fragments.push(preds.join(" AND "));
            }
            Ok(())
        }
        Polarity::Unless => {
            if expr_has_binding(&cond.expr) {
                return Err(unsupported(
                    "unless-condition",
                    "a partner binding under negation has no query rendering",
                ));
            }
            let pred = render_predicate(&cond.expr, anchor, det_var)?;
            let negated = if matches!(cond.expr, ConditionExpr::And(..) | ConditionExpr::Or(..)) {
                format!("NOT ({pred})")
            } else {
                format!("NOT {pred}")
            };
            out.where_fragments.push(negated);
            Ok(())
        }
    }
}

fn compile_constraint_at(
    c: &Constraint,
    dialect: Dialect,
    anchor: &str,
    guards: &mut GuardVars,
) -> Result<ConstraintFragments, CypherError> {
    let mut out = ConstraintFragments {
        kind: c.determiner.kind(),
        match_fragments: Vec::new(),
        where_fragments: Vec::new(),
        notes: Vec::new(),
    };
    let det_var = c.determiner.var();

    if let Some(dist) = &c.qualifier.distribution {
        out.notes.push(format!(
            "distribution {dist} shapes per-node targets at generation time; queries cannot express it"
        ));
    }

    if let Some(cond) = &c.condition {
        // Conditioned constraints compile to their condition alone: the
        // count requirement has no per-creation rendering, so it is
        // listed rather than silently dropped.
        compile_condition(cond, anchor, det_var, &mut out)?;
        out.notes.push(format!(
            "count requirement ({} {}) is enforced by generation, not by this guard",
            c.requirement, c.qualifier
        ));
        return Ok(out);
    }

    match (&c.requirement, c.qualifier.hi()) {
        (Requirement::HasProperty { name, value }, Some(hi)) => match hi {
            0 => out.where_fragments.push("false".to_string()),
            1 => out.where_fragments.push(format!(
                "NOT {anchor}.{} = {}",
                mangle(name),
                value.cypher_literal()
            )),
            _ => out.notes.push(format!(
                "a property matches at most once, so the bound {} is vacuous",
                c.qualifier
            )),
        },
        (Requirement::HasProperty { .. }, None) => {}
        (req, Some(hi)) => match dialect {
            Dialect::Inline => {
                let var = guards.take();
                out.match_fragments
                    .push(format!("MATCH {}", guard_pattern(req, anchor, &var)));
                out.where_fragments
                    .push(format!("NOT count({var}) >= {hi}"));
            }
            Dialect::Strict => {
                out.where_fragments.push(format!(
                    "NOT size({}) >= {hi}",
                    guard_pattern(req, anchor, "")
                ));
            }
        },
        (_, None) => {}
    }
    if c.qualifier.lo() > 0 {
        out.notes.push(format!(
            "the minimum side of {} is a generation target, not a creation guard",
            c.qualifier
        ));
    }
    Ok(out)
}

/// Compile one constraint into fragments anchored at variable `a`.
pub fn compile_constraint(
    c: &Constraint,
    dialect: Dialect,
) -> Result<ConstraintFragments, CypherError> {
    compile_constraint_at(c, dialect, "a", &mut GuardVars::new())
}

/// Merge a rule's query with every constraint whose determiner kind
/// matches one of the rule's anchors. Fragments keep constraint file
/// order; guard variables are numbered across the whole query.
pub fn merge_query(
    rule: &RewriteRule,
    constraints: &[Constraint],
    dialect: Dialect,
) -> Result<CompiledQuery, CypherError> {
    let (base_match, create, anchors) = rule_parts(rule);
    let mut clauses = vec![base_match];
    let mut wheres = Vec::new();
    let mut notes = Vec::new();
    let mut guards = GuardVars::new();
    let mut variables: Vec<String> = anchors.iter().map(|(v, _)| v.to_string()).collect();
    for c in constraints {
        for &(var, kind) in &anchors {
            if c.determiner.kind() != kind {
                continue;
            }
            let frags = compile_constraint_at(c, dialect, var, &mut guards)?;
            for m in &frags.match_fragments {
                for v in fragment_variables(m) {
                    if !variables.contains(&v) {
                        variables.push(v);
                    }
                }
            }
            clauses.extend(frags.match_fragments);
            wheres.extend(frags.where_fragments);
            notes.extend(frags.notes);
        }
    }
    let mut text = clauses.join(" ");
    if !wheres.is_empty() {
        write!(text, " WHERE {}", wheres.join(" AND ")).expect("string write");
    }
    write!(text, " {create}").expect("string write");
    Ok(CompiledQuery {
        rule: rule.label(),
        text,
        variables,
        notes,
    })
}

/// Variables a MATCH fragment introduces (guard or binding vars).
fn fragment_variables(fragment: &str) -> Vec<String> {
    let mut out = Vec::new();
    if let Ok(p) = parse_pattern(fragment.trim_start_matches("MATCH").trim()) {
        if let Some(v) = p.rel_var {
            out.push(v);
        }
        if let Some(v) = p.right_var {
            out.push(v);
        }
    }
    out
}

/// Export a valid graph as a replayable script: one CREATE per node with
/// a synthetic `_id` property, then one MATCH/CREATE per edge joining by
/// `_id`. Times render as `_start`/`_end`/`_time` string properties.
pub fn export_create_script(graph: &ProvGraph) -> Result<String, CypherError> {
    let violations = graph.validate();
    if !violations.is_empty() {
        return Err(CypherError::InvalidGraph {
            violations: violations.len(),
        });
    }
    let mut out = String::new();
    for node in graph.nodes() {
        let mut entries = vec![format!("_id: {}", node.id.0)];
        entries.extend(render_prop_entries(&node.props));
        if let Some(t) = &node.start {
            entries.push(format!("_start: \"{}\"", t.as_str()));
        }
        if let Some(t) = &node.end {
            entries.push(format!("_end: \"{}\"", t.as_str()));
        }
        writeln!(out, "CREATE (:{} {});", node.kind.name(), braces(entries)).expect("string write");
    }
    for edge in graph.edges() {
        let src = graph.node(edge.src).expect("validated graph");
        let dst = graph.node(edge.dst).expect("validated graph");
        writeln!(
            out,
            "MATCH (s:{} {{_id: {}}}), (t:{} {{_id: {}}}) CREATE (s)-[:{} {}]->(t);",
            src.kind.name(),
            edge.src.0,
            dst.kind.name(),
            edge.dst.0,
            edge.kind.cypher_name(),
            render_edge_props(&edge.props, edge.time.as_ref()),
        )
        .expect("string write");
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// Reference evaluation of emitted fragments.
// ---------------------------------------------------------------------

/// A parsed `(left)-[var:TYPE]-(right:Label)` pattern. `directed` means
/// the arrow `->` was present (emitted patterns never point left).
#[derive(Debug, Clone)]
struct TextPattern {
    left_var: Option<String>,
    rel_var: Option<String>,
    rel_type: Option<RelationKind>,
    directed: bool,
    right_var: Option<String>,
    right_label: Option<NodeKind>,
}

struct Scanner<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn new(text: &'a str) -> Scanner<'a> {
        Scanner { text, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        while self.rest().starts_with(' ') {
            self.pos += 1;
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), CypherError> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(unsupported(
                "fragment",
                format!("expected {token:?} at {:?}", self.rest()),
            ))
        }
    }

    fn word(&mut self) -> Option<String> {
        self.skip_ws();
        let rest = self.rest();
        let end = rest
            .char_indices()
            .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_'))
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        if end == 0 {
            None
        } else {
            self.pos += end;
            Some(rest[..end].to_string())
        }
    }

    fn integer(&mut self) -> Result<u64, CypherError> {
        let w = self
            .word()
            .ok_or_else(|| unsupported("fragment", "expected an integer"))?;
        w.parse()
            .map_err(|_| unsupported("fragment", format!("bad integer {w:?}")))
    }
}

fn parse_node_end(s: &mut Scanner) -> Result<(Option<String>, Option<NodeKind>), CypherError> {
    s.expect("(")?;
    let var = s.word();
    let label = if s.eat(":") {
        let name = s
            .word()
            .ok_or_else(|| unsupported("fragment", "expected a node label"))?;
        Some(
            NodeKind::parse(&name)
                .ok_or_else(|| unsupported("fragment", format!("unknown label {name:?}")))?,
        )
    } else {
        None
    };
    s.expect(")")?;
    Ok((var, label))
}

fn parse_pattern_scanner(s: &mut Scanner) -> Result<TextPattern, CypherError> {
    let (left_var, left_label) = parse_node_end(s)?;
    if left_label.is_some() {
        return Err(unsupported("fragment", "unexpected label on pattern head"));
    }
    s.expect("-")?;
    s.expect("[")?;
    let rel_var = s.word();
    let rel_type = if s.eat(":") {
        let name = s
            .word()
            .ok_or_else(|| unsupported("fragment", "expected a relationship type"))?;
        Some(
            RelationKind::ALL
                .into_iter()
                .find(|k| k.cypher_name() == name)
                .ok_or_else(|| unsupported("fragment", format!("unknown type {name:?}")))?,
        )
    } else {
        None
    };
    s.expect("]")?;
    s.expect("-")?;
    let directed = s.eat(">");
    let (right_var, right_label) = parse_node_end(s)?;
    Ok(TextPattern {
        left_var,
        rel_var,
        rel_type,
        directed,
        right_var,
        right_label,
    })
}

fn parse_pattern(text: &str) -> Result<TextPattern, CypherError> {
    let mut s = Scanner::new(text);
    let p = parse_pattern_scanner(&mut s)?;
    s.skip_ws();
    if !s.rest().is_empty() {
        return Err(unsupported(
            "fragment",
            format!("trailing input {:?}", s.rest()),
        ));
    }
    Ok(p)
}

#[derive(Debug, Clone)]
enum WhereExpr {
    And(Box<WhereExpr>, Box<WhereExpr>),
    Or(Box<WhereExpr>, Box<WhereExpr>),
    Not(Box<WhereExpr>),
    False,
    CountGe(String, u64),
    SizeGe(TextPattern, u64),
    PropEq {
        var: String,
        name: String,
        value: PropValue,
    },
    Pattern(TextPattern),
}

fn parse_where(text: &str) -> Result<WhereExpr, CypherError> {
    let mut s = Scanner::new(text);
    let e = parse_or(&mut s)?;
    s.skip_ws();
    if !s.rest().is_empty() {
        return Err(unsupported(
            "fragment",
            format!("trailing input {:?}", s.rest()),
        ));
    }
    Ok(e)
}

fn parse_or(s: &mut Scanner) -> Result<WhereExpr, CypherError> {
    let mut left = parse_and(s)?;
    while s.eat("OR ") {
        let right = parse_and(s)?;
        left = WhereExpr::Or(Box::new(left), Box::new(right));
    }
    Ok(left)
}

fn parse_and(s: &mut Scanner) -> Result<WhereExpr, CypherError> {
    let mut left = parse_unary(s)?;
    while s.eat("AND ") {
        let right = parse_unary(s)?;
        left = WhereExpr::And(Box::new(left), Box::new(right));
    }
    Ok(left)
}

fn parse_unary(s: &mut Scanner) -> Result<WhereExpr, CypherError> {
    if s.eat("NOT ") {
        return Ok(WhereExpr::Not(Box::new(parse_unary(s)?)));
    }
    s.skip_ws();
    let rest = s.rest();
    if rest.starts_with("false") {
        s.pos += "false".len();
        return Ok(WhereExpr::False);
    }
    if rest.starts_with("count(") {
        s.pos += "count(".len();
        let var = s
            .word()
            .ok_or_else(|| unsupported("fragment", "expected a guard variable"))?;
        s.expect(")")?;
        s.expect(">=")?;
        let n = s.integer()?;
        return Ok(WhereExpr::CountGe(var, n));
    }
    if rest.starts_with("size(") {
        s.pos += "size(".len();
        let p = parse_pattern_scanner(s)?;
        s.expect(")")?;
        s.expect(">=")?;
        let n = s.integer()?;
        return Ok(WhereExpr::SizeGe(p, n));
    }
    if let Some(inner) = rest.strip_prefix('(') {
        // Either a parenthesized expression or a pattern predicate. A
        // pattern head is a bare variable (or nothing) whose closing
        // paren is immediately followed by a dash.
        let close = inner.find(')');
        let is_pattern = close.is_some_and(|i| {
            inner[..i]
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_')
                && inner[i + 1..].starts_with('-')
        });
        if is_pattern {
            return Ok(WhereExpr::Pattern(parse_pattern_scanner(s)?));
        }
        s.expect("(")?;
        let e = parse_or(s)?;
        s.expect(")")?;
        return Ok(e);
    }
    // Property equality: var.name = literal
    let var = s
        .word()
        .ok_or_else(|| unsupported("fragment", format!("unparsed predicate {rest:?}")))?;
    s.expect(".")?;
    let name = s
        .word()
        .ok_or_else(|| unsupported("fragment", "expected a property name"))?;
    s.expect("=")?;
    let value = parse_literal(s)?;
    Ok(WhereExpr::PropEq { var, name, value })
}

fn parse_literal(s: &mut Scanner) -> Result<PropValue, CypherError> {
    s.skip_ws();
    let rest = s.rest();
    if let Some(stripped) = rest.strip_prefix('"') {
        let mut out = String::new();
        let mut chars = stripped.char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '\\' => {
                    if let Some((_, esc)) = chars.next() {
                        out.push(esc);
                    }
                }
                '"' => {
                    s.pos += 1 + i + 1;
                    return Ok(PropValue::Str(out));
                }
                other => out.push(other),
            }
        }
        return Err(unsupported("fragment", "unterminated string literal"));
    }
    if rest.starts_with("true") {
        s.pos += 4;
        return Ok(PropValue::Bool(true));
    }
    if rest.starts_with("false") {
        s.pos += 5;
        return Ok(PropValue::Bool(false));
    }
    let end = rest
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_digit() || *c == '-' || *c == '.'))
        .map(|(i, _)| i)
        .unwrap_or(rest.len());
    let token = &rest[..end];
    if token.is_empty() {
        return Err(unsupported("fragment", format!("bad literal at {rest:?}")));
    }
    s.pos += end;
    if let Ok(i) = token.parse::<i64>() {
        return Ok(PropValue::Int(i));
    }
    token
        .parse::<f64>()
        .map(PropValue::Decimal)
        .map_err(|_| unsupported("fragment", format!("bad literal {token:?}")))
}

/// Node properties are matched through the same mangling the emitter
/// applies, mirroring what a database loaded via the exported script
/// would contain.
fn prop_matches(graph: &ProvGraph, node: NodeId, name: &str, value: &PropValue) -> bool {
    graph.node(node).is_some_and(|n| {
        n.props
            .iter()
            .any(|(k, v)| mangle(k) == name && values_equal(v, value))
    })
}

fn values_equal(a: &PropValue, b: &PropValue) -> bool {
    match (a, b) {
        // Timestamps render as quoted strings, so they compare as text.
        (PropValue::Timestamp { ts }, PropValue::Str(s))
        | (PropValue::Str(s), PropValue::Timestamp { ts }) => ts.as_str() == s,
        _ => a == b,
    }
}

/// Count edges a guard pattern matches when its sole bound endpoint is
/// `node`.
fn pattern_count(graph: &ProvGraph, p: &TextPattern, node: NodeId) -> u64 {
    let dir = match (p.directed, &p.left_var, &p.right_var) {
        (true, Some(_), _) => Direction::Out,
        (true, None, _) => Direction::In,
        (false, _, _) => Direction::Both,
    };
    graph
        .degree(node, dir, p.rel_type)
        .map(u64::from)
        .unwrap_or(0)
}

struct EvalCtx<'a> {
    graph: &'a ProvGraph,
    env: Vec<(String, NodeId)>,
    guard_counts: Vec<(String, u64)>,
}

impl EvalCtx<'_> {
    fn lookup(&self, var: &str) -> Option<NodeId> {
        self.env
            .iter()
            .rev()
            .find(|(v, _)| v == var)
            .map(|(_, n)| *n)
    }

    fn eval(&self, expr: &WhereExpr) -> bool {
        match expr {
            WhereExpr::And(l, r) => self.eval(l) && self.eval(r),
            WhereExpr::Or(l, r) => self.eval(l) || self.eval(r),
            WhereExpr::Not(e) => !self.eval(e),
            WhereExpr::False => false,
            WhereExpr::CountGe(var, n) => self
                .guard_counts
                .iter()
                .find(|(v, _)| v == var)
                .map(|(_, c)| c >= n)
                .unwrap_or(false),
            WhereExpr::SizeGe(p, n) => {
                let anchor_var = p.left_var.as_deref().or(p.right_var.as_deref());
                let Some(node) = anchor_var.and_then(|v| self.lookup(v)) else {
                    return false;
                };
                pattern_count(self.graph, p, node) >= *n
            }
            WhereExpr::PropEq { var, name, value } => {
                let Some(node) = self.lookup(var) else {
                    return false;
                };
                prop_matches(self.graph, node, name, value)
            }
            WhereExpr::Pattern(p) => {
                let anchor_var = p.left_var.as_deref().or(p.right_var.as_deref());
                let Some(node) = anchor_var.and_then(|v| self.lookup(v)) else {
                    return false;
                };
                pattern_count(self.graph, p, node) > 0
            }
        }
    }
}

/// Evaluate a compiled constraint's fragments on one node, from the
/// emitted text alone: binding MATCH fragments become existential joint
/// assignments, guard MATCH fragments feed `count(...)`, and the WHERE
/// predicates must all hold. Returns whether the node would pass the
/// constraint's filter in the merged query.
pub fn fragments_hold(
    frags: &ConstraintFragments,
    graph: &ProvGraph,
    node: NodeId,
) -> Result<bool, CypherError> {
    let mut guard_counts = Vec::new();
    let mut bindings = Vec::new();
    for m in &frags.match_fragments {
        let body = m
            .strip_prefix("MATCH ")
            .ok_or_else(|| unsupported("fragment", format!("not a MATCH clause: {m:?}")))?;
        let p = parse_pattern(body)?;
        if let Some(label) = p.right_label {
            bindings.push((p.clone(), label));
        } else {
            let var = p
                .rel_var
                .clone()
                .ok_or_else(|| unsupported("fragment", "guard pattern without a variable"))?;
            guard_counts.push((var, pattern_count(graph, &p, node)));
        }
    }
    let exprs = frags
        .where_fragments
        .iter()
        .map(|w| parse_where(w))
        .collect::<Result<Vec<_>, _>>()?;

    let ctx = EvalCtx {
        graph,
        env: vec![("a".to_string(), node)],
        guard_counts,
    };
    Ok(assign_bindings(&ctx, &bindings, 0, &exprs))
}

/// Joint assignment search: bind each partner variable to a neighbor of
/// its subject over the named relation (either direction), then require
/// every WHERE expression.
fn assign_bindings(
    ctx: &EvalCtx,
    bindings: &[(TextPattern, NodeKind)],
    index: usize,
    exprs: &[WhereExpr],
) -> bool {
    if index == bindings.len() {
        return exprs.iter().all(|e| ctx.eval(e));
    }
    let (pattern, label) = &bindings[index];
    let Some(subject) = pattern.left_var.as_deref().and_then(|v| ctx.lookup(v)) else {
        return false;
    };
    let Some(var) = pattern.right_var.clone() else {
        return false;
    };
    let graph = ctx.graph;
    let incident = graph
        .incoming_edges(subject)
        .iter()
        .chain(graph.outgoing_edges(subject).iter());
    for &eid in incident {
        let edge = graph.edge(eid).expect("consistent adjacency");
        if pattern.rel_type.is_some_and(|k| k != edge.kind) {
            continue;
        }
        let partner = if edge.src == subject {
            edge.dst
        } else {
            edge.src
        };
        if graph.node(partner).map(|n| n.kind) != Some(*label) {
            continue;
        }
        let mut next = EvalCtx {
            graph,
            env: ctx.env.clone(),
            guard_counts: ctx.guard_counts.clone(),
        };
        next.env.push((var.clone(), partner));
        if assign_bindings(&next, bindings, index + 1, exprs) {
            return true;
        }
    }
    false
}
