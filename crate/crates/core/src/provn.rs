//! PROV-N subset reader and writer.
//!
//! The supported grammar covers bare statements, one per parenthesized
//! term, with optional attribute lists and "-" placeholders:
//!
//! ```text
//! entity(e1, [prov:type="Document"])
//! activity(a, 2013-11-16T16:00:00, 2013-11-16T16:05:00)
//! agent(ag, [prov:type='prov:Person'])
//! used(a, e1, -)
//! wasGeneratedBy(e2, a, -, [ex:fct="save"])
//! wasDerivedFrom(e2, e1, a)
//! ```
//!
//! Extra positional arguments of relation statements are classified by
//! shape: a timestamp becomes the edge's time, an identifier is recorded as
//! the property `prov:activity`, and "-" is a skipped placeholder.
//! Identifier references are resolved after the whole document is read, so
//! forward references are fine. `//` starts a line comment.

use indexmap::IndexMap;

use crate::graph::{NodeId, ProvGraph};
use crate::model::{NodeKind, PropMap, PropValue, RelationKind, Timestamp};
use crate::seed::{EdgeTemplate, NodeTemplate, SeedPattern, SeedWarning};

#[derive(Debug, Clone, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("unknown relation {name:?} at line {line}, column {col}")]
    UnknownRelation {
        line: usize,
        col: usize,
        name: String,
    },
    #[error("undeclared identifier {id:?} at line {line}, column {col}")]
    UndeclaredIdentifier { line: usize, col: usize, id: String },
    #[error("duplicate identifier {id:?} at line {line}, column {col}")]
    DuplicateIdentifier { line: usize, col: usize, id: String },
}

// ---------------------------------------------------------------------------
// Scanner

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Atom(String),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Equals,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1usize;
    let mut col = 1usize;
    macro_rules! bump {
        ($c:expr) => {
            if $c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        };
    }
    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        match c {
            '/' => {
                chars.next();
                bump!('/');
                if chars.peek() == Some(&'/') {
                    for c in chars.by_ref() {
                        bump!(c);
                        if c == '\n' {
                            break;
                        }
                    }
                } else {
                    return Err(ParseError::Syntax {
                        line: tline,
                        col: tcol,
                        message: "stray '/' (expected '//' comment)".to_string(),
                    });
                }
            }
            c if c.is_whitespace() => {
                chars.next();
                bump!(c);
            }
            '"' | '\'' => {
                let quote = c;
                chars.next();
                bump!(quote);
                let mut s = String::new();
                let mut closed = false;
                while let Some(c) = chars.next() {
                    bump!(c);
                    if c == '\\' {
                        if let Some(e) = chars.next() {
                            bump!(e);
                            s.push(e);
                        }
                    } else if c == quote {
                        closed = true;
                        break;
                    } else {
                        s.push(c);
                    }
                }
                if !closed {
                    return Err(ParseError::Syntax {
                        line: tline,
                        col: tcol,
                        message: "unterminated string literal".to_string(),
                    });
                }
                out.push(Spanned {
                    tok: Tok::Str(s),
                    line: tline,
                    col: tcol,
                });
            }
            '(' | ')' | '[' | ']' | ',' | '=' => {
                chars.next();
                bump!(c);
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    _ => Tok::Equals,
                };
                out.push(Spanned {
                    tok,
                    line: tline,
                    col: tcol,
                });
            }
            _ => {
                // Everything else (identifiers, qnames, timestamps, numbers,
                // the "-" placeholder) is one atom up to the next delimiter.
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace()
                        || matches!(c, '(' | ')' | '[' | ']' | ',' | '=' | '"' | '\'')
                    {
                        break;
                    }
                    s.push(c);
                    chars.next();
                    bump!(c);
                }
                out.push(Spanned {
                    tok: Tok::Atom(s),
                    line: tline,
                    col: tcol,
                });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser

#[derive(Debug, Clone)]
enum RawStmt {
    Node {
        kind: NodeKind,
        id: String,
        start: Option<Timestamp>,
        end: Option<Timestamp>,
        props: PropMap,
        line: usize,
        col: usize,
    },
    Rel {
        kind: RelationKind,
        src: String,
        dst: String,
        time: Option<Timestamp>,
        activity_ref: Option<String>,
        props: PropMap,
        line: usize,
        col: usize,
    },
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> (usize, usize) {
        match self.toks.get(self.pos).or(self.toks.last()) {
            Some(t) => (t.line, t.col),
            None => (1, 1),
        }
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError::Syntax {
            line,
            col,
            message: message.into(),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek().map(|t| &t.tok) == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek().map(|t| &t.tok) == Some(tok) {
            self.pos += 1;
            return true;
        }
        false
    }

    fn atom(&mut self, what: &str) -> Result<(String, usize, usize), ParseError> {
        match self.next() {
            Some(Spanned {
                tok: Tok::Atom(a),
                line,
                col,
            }) => Ok((a, line, col)),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.err(format!("expected {what}")))
            }
        }
    }

    /// `[k="v", ...]`; the leading '[' has already been checked by the
    /// caller via peek.
    fn attrs(&mut self) -> Result<PropMap, ParseError> {
        self.expect(Tok::LBracket, "'['")?;
        let mut props = PropMap::new();
        if self.eat(&Tok::RBracket) {
            return Ok(props);
        }
        loop {
            let name = match self.next() {
                Some(Spanned {
                    tok: Tok::Atom(a), ..
                }) => a,
                Some(Spanned {
                    tok: Tok::Str(s), ..
                }) => s,
                _ => {
                    self.pos = self.pos.saturating_sub(1);
                    return Err(self.err("expected an attribute name"));
                }
            };
            self.expect(Tok::Equals, "'=' after attribute name")?;
            let value = match self.next() {
                Some(Spanned {
                    tok: Tok::Str(s), ..
                }) => PropValue::Str(s),
                Some(Spanned {
                    tok: Tok::Atom(a),
                    line,
                    col,
                }) => classify_literal(&a).ok_or(ParseError::Syntax {
                    line,
                    col,
                    message: format!("expected a literal, got {a:?}"),
                })?,
                _ => {
                    self.pos = self.pos.saturating_sub(1);
                    return Err(self.err("expected an attribute value"));
                }
            };
            props.insert(name, value);
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::RBracket, "']' or ',' in attribute list")?;
            break;
        }
        Ok(props)
    }

    fn node_stmt(&mut self, kind: NodeKind) -> Result<RawStmt, ParseError> {
        self.expect(Tok::LParen, "'('")?;
        let (id, line, col) = self.atom("an identifier")?;
        let mut start = None;
        let mut end = None;
        let mut props = PropMap::new();
        let mut times = Vec::new();
        while self.eat(&Tok::Comma) {
            if matches!(self.peek().map(|t| &t.tok), Some(Tok::LBracket)) {
                props = self.attrs()?;
                break;
            }
            let (a, aline, acol) = self.atom("a timestamp or '-'")?;
            if a == "-" {
                times.push(None);
            } else {
                let ts = Timestamp::parse(&a).map_err(|_| ParseError::Syntax {
                    line: aline,
                    col: acol,
                    message: format!("expected a timestamp or '-', got {a:?}"),
                })?;
                times.push(Some(ts));
            }
        }
        if !times.is_empty() {
            if kind != NodeKind::Activity {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    message: format!("{} declarations take no timestamps", kind.name()),
                });
            }
            if times.len() != 2 {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    message: "activity takes exactly two timestamps (or '-' placeholders)"
                        .to_string(),
                });
            }
            start = times[0].clone();
            end = times[1].clone();
        }
        self.expect(Tok::RParen, "')'")?;
        Ok(RawStmt::Node {
            kind,
            id,
            start,
            end,
            props,
            line,
            col,
        })
    }

    fn rel_stmt(&mut self, kind: RelationKind) -> Result<RawStmt, ParseError> {
        self.expect(Tok::LParen, "'('")?;
        let (src, line, col) = self.atom("a source identifier")?;
        self.expect(Tok::Comma, "','")?;
        let (dst, _, _) = self.atom("a target identifier")?;
        let mut time = None;
        let mut activity_ref = None;
        let mut props = PropMap::new();
        while self.eat(&Tok::Comma) {
            if matches!(self.peek().map(|t| &t.tok), Some(Tok::LBracket)) {
                props = self.attrs()?;
                break;
            }
            let (a, _, _) = self.atom("an identifier, timestamp, or '-'")?;
            if a == "-" {
                continue;
            }
            if let Ok(ts) = Timestamp::parse(&a) {
                if time.is_none() {
                    time = Some(ts);
                }
            } else if activity_ref.is_none() {
                activity_ref = Some(a);
            }
        }
        self.expect(Tok::RParen, "')'")?;
        Ok(RawStmt::Rel {
            kind,
            src,
            dst,
            time,
            activity_ref,
            props,
            line,
            col,
        })
    }

    fn statements(&mut self) -> Result<Vec<RawStmt>, ParseError> {
        let mut out = Vec::new();
        while self.peek().is_some() {
            let (name, line, col) = self.atom("a statement name")?;
            let stmt = match name.as_str() {
                "entity" => self.node_stmt(NodeKind::Entity)?,
                "agent" => self.node_stmt(NodeKind::Agent)?,
                "activity" => self.node_stmt(NodeKind::Activity)?,
                other => match RelationKind::parse_provn(other) {
                    Some(kind) => self.rel_stmt(kind)?,
                    None => {
                        return Err(ParseError::UnknownRelation {
                            line,
                            col,
                            name: name.clone(),
                        });
                    }
                },
            };
            out.push(stmt);
        }
        Ok(out)
    }
}

fn classify_literal(atom: &str) -> Option<PropValue> {
    match atom {
        "true" => return Some(PropValue::Bool(true)),
        "false" => return Some(PropValue::Bool(false)),
        _ => {}
    }
    if let Ok(i) = atom.parse::<i64>() {
        return Some(PropValue::Int(i));
    }
    if let Ok(d) = atom.parse::<f64>() {
        return Some(PropValue::Decimal(d));
    }
    if let Ok(ts) = Timestamp::parse(atom) {
        return Some(PropValue::Timestamp { ts });
    }
    None
}

fn parse_statements(text: &str) -> Result<Vec<RawStmt>, ParseError> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.statements()
}

/// Parse a seed trace into a pattern, with any assembly warnings.
pub fn parse_seed(text: &str) -> Result<(SeedPattern, Vec<SeedWarning>), ParseError> {
    let stmts = parse_statements(text)?;
    let mut nodes: IndexMap<String, NodeTemplate> = IndexMap::new();
    let mut edges = Vec::new();
    for stmt in &stmts {
        if let RawStmt::Node {
            kind,
            id,
            start,
            end,
            props,
            line,
            col,
        } = stmt
        {
            if nodes.contains_key(id) {
                return Err(ParseError::DuplicateIdentifier {
                    line: *line,
                    col: *col,
                    id: id.clone(),
                });
            }
            nodes.insert(
                id.clone(),
                NodeTemplate {
                    local_id: id.clone(),
                    kind: *kind,
                    props: props.clone(),
                    start: start.clone(),
                    end: end.clone(),
                },
            );
        }
    }
    for stmt in &stmts {
        if let RawStmt::Rel {
            kind,
            src,
            dst,
            time,
            activity_ref,
            props,
            line,
            col,
        } = stmt
        {
            for id in [src, dst].into_iter().chain(activity_ref.iter()) {
                if !nodes.contains_key(id) {
                    return Err(ParseError::UndeclaredIdentifier {
                        line: *line,
                        col: *col,
                        id: id.clone(),
                    });
                }
            }
            let mut props = props.clone();
            if let Some(a) = activity_ref {
                props
                    .entry("prov:activity".to_string())
                    .or_insert_with(|| PropValue::str(a.clone()));
            }
            edges.push(EdgeTemplate {
                kind: *kind,
                src: src.clone(),
                dst: dst.clone(),
                props,
                time: time.clone(),
            });
        }
    }
    Ok(SeedPattern::assemble(nodes, edges))
}

/// Parse a PROV-N file as a concrete graph. Structural invariants are NOT
/// enforced here; run `validate` on the result to report breaches.
pub fn parse_graph(text: &str) -> Result<ProvGraph, ParseError> {
    let (pattern, _) = parse_seed(text)?;
    let mut graph = ProvGraph::new();
    let mut ids: IndexMap<&str, NodeId> = IndexMap::new();
    for (local, node) in &pattern.nodes {
        let id = graph.add_node(node.kind, node.props.clone());
        graph.set_activity_times_unchecked(id, node.start.clone(), node.end.clone());
        ids.insert(local.as_str(), id);
    }
    for edge in &pattern.edges {
        graph.insert_edge_unchecked(
            edge.kind,
            ids[edge.src.as_str()],
            ids[edge.dst.as_str()],
            edge.props.clone(),
            edge.time.clone(),
        );
    }
    Ok(graph)
}

// ---------------------------------------------------------------------------
// Writers

/// Attribute literal: timestamps render bare so they classify back to
/// timestamps on re-parse.
fn attr_literal(value: &PropValue) -> String {
    match value {
        PropValue::Timestamp { ts } => ts.as_str().to_string(),
        other => other.provn_literal(),
    }
}

fn push_attrs(out: &mut String, props: &PropMap) {
    if props.is_empty() {
        return;
    }
    out.push_str(", [");
    for (i, (k, v)) in props.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(k);
        out.push('=');
        out.push_str(&attr_literal(v));
    }
    out.push(']');
}

fn push_node_stmt(
    out: &mut String,
    kind: NodeKind,
    id: &str,
    start: Option<&Timestamp>,
    end: Option<&Timestamp>,
    props: &PropMap,
) {
    out.push_str(match kind {
        NodeKind::Entity => "entity(",
        NodeKind::Activity => "activity(",
        NodeKind::Agent => "agent(",
    });
    out.push_str(id);
    if start.is_some() || end.is_some() {
        for t in [start, end] {
            out.push_str(", ");
            match t {
                Some(ts) => out.push_str(ts.as_str()),
                None => out.push('-'),
            }
        }
    }
    push_attrs(out, props);
    out.push_str(")\n");
}

fn push_rel_stmt(
    out: &mut String,
    kind: RelationKind,
    src: &str,
    dst: &str,
    time: Option<&Timestamp>,
    props: &PropMap,
) {
    out.push_str(kind.provn_name());
    out.push('(');
    out.push_str(src);
    out.push_str(", ");
    out.push_str(dst);
    if let Some(t) = time {
        out.push_str(", ");
        out.push_str(t.as_str());
    }
    push_attrs(out, props);
    out.push_str(")\n");
}

/// Serialize a seed pattern back to PROV-N, nodes first in declaration
/// order, then edges in statement order.
pub fn write_seed(pattern: &SeedPattern) -> String {
    let mut out = String::new();
    for (id, node) in &pattern.nodes {
        push_node_stmt(
            &mut out,
            node.kind,
            id,
            node.start.as_ref(),
            node.end.as_ref(),
            &node.props,
        );
    }
    for edge in &pattern.edges {
        push_rel_stmt(
            &mut out,
            edge.kind,
            &edge.src,
            &edge.dst,
            edge.time.as_ref(),
            &edge.props,
        );
    }
    out
}

/// Serialize a graph to PROV-N, nodes labeled `n{index}`.
pub fn write_graph(graph: &ProvGraph) -> String {
    let mut out = String::new();
    for node in graph.nodes() {
        push_node_stmt(
            &mut out,
            node.kind,
            &node.id.label(),
            node.start.as_ref(),
            node.end.as_ref(),
            &node.props,
        );
    }
    for edge in graph.edges() {
        push_rel_stmt(
            &mut out,
            edge.kind,
            &edge.src.label(),
            &edge.dst.label(),
            edge.time.as_ref(),
            &edge.props,
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Violation;

    /// The document-revision seed trace: two document entities, one edit
    /// activity, one person agent, four relations.
    pub(crate) const REVISION_SEED: &str = r#"
entity(e1, [prov:type="Document"])
entity(e2, [prov:type="Document"])
activity(a, 2013-11-16T16:00:00, 2013-11-16T16:05:00, [prov:type="edit"])
agent(ag, [prov:type='prov:Person'])
used(a, e1, -)
wasGeneratedBy(e2, a, -, [ex:fct="save"])
wasAssociatedWith(a, ag, -, [prov:role="contributor"])
wasDerivedFrom(e2, e1, a)
"#;

    #[test]
    fn revision_listing_parses() {
        let (seed, warnings) = parse_seed(REVISION_SEED).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert_eq!(seed.nodes.len(), 4);
        assert_eq!(seed.edges.len(), 4);
        assert_eq!(
            seed.active_kinds,
            vec![
                RelationKind::Used,
                RelationKind::WasGeneratedBy,
                RelationKind::WasAssociatedWith,
                RelationKind::WasDerivedFrom,
            ]
        );
        let a = &seed.nodes["a"];
        assert_eq!(a.kind, NodeKind::Activity);
        assert_eq!(a.start.as_ref().unwrap().as_str(), "2013-11-16T16:00:00");
        assert_eq!(a.end.as_ref().unwrap().as_str(), "2013-11-16T16:05:00");
        let ag = &seed.nodes["ag"];
        assert_eq!(ag.props["prov:type"], PropValue::str("prov:Person"));
        let derived = &seed.edges[3];
        assert_eq!(derived.kind, RelationKind::WasDerivedFrom);
        assert_eq!(derived.props["prov:activity"], PropValue::str("a"));
        let gen = &seed.edges[1];
        assert_eq!(gen.props["ex:fct"], PropValue::str("save"));
    }

    #[test]
    fn smallest_trace() {
        let (seed, warnings) = parse_seed("entity(e1)").unwrap();
        assert_eq!(seed.nodes.len(), 1);
        assert_eq!(seed.edges.len(), 0);
        assert!(seed.active_kinds.is_empty());
        assert!(warnings
            .iter()
            .any(|w| matches!(w, SeedWarning::EmptyActiveSet)));
    }

    #[test]
    fn undeclared_identifier_rejected() {
        let err = parse_seed("entity(e1)\nused(a, e1)").unwrap_err();
        assert!(matches!(
            err,
            ParseError::UndeclaredIdentifier { ref id, .. } if id == "a"
        ));
    }

    #[test]
    fn forward_references_are_fine() {
        let text = "used(a, e1)\nactivity(a)\nentity(e1)";
        let (seed, _) = parse_seed(text).unwrap();
        assert_eq!(seed.edges.len(), 1);
    }

    #[test]
    fn duplicate_identifier_rejected() {
        let err = parse_seed("entity(e1)\nentity(e1)").unwrap_err();
        assert!(matches!(err, ParseError::DuplicateIdentifier { .. }));
    }

    #[test]
    fn unknown_statement_rejected() {
        let err = parse_seed("widget(w1)").unwrap_err();
        assert!(matches!(
            err,
            ParseError::UnknownRelation { ref name, .. } if name == "widget"
        ));
    }

    #[test]
    fn syntax_error_carries_position() {
        let err = parse_seed("entity(e1\nentity(e2)").unwrap_err();
        match err {
            ParseError::Syntax { line, col, .. } => {
                assert_eq!(line, 2);
                assert!(col >= 1);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn comments_are_skipped() {
        let text = "// a comment line\nentity(e1) // not parsed: used(a, e1)\n";
        let (seed, _) = parse_seed(text).unwrap();
        assert_eq!(seed.nodes.len(), 1);
        assert_eq!(seed.edges.len(), 0);
    }

    #[test]
    fn attribute_literals_classify() {
        let text = "entity(e1, [s=\"x\", i=3, d=2.5, b=true, t=2013-11-16T16:00:00])";
        let (seed, _) = parse_seed(text).unwrap();
        let props = &seed.nodes["e1"].props;
        assert_eq!(props["s"], PropValue::str("x"));
        assert_eq!(props["i"], PropValue::Int(3));
        assert_eq!(props["d"], PropValue::Decimal(2.5));
        assert_eq!(props["b"], PropValue::Bool(true));
        assert!(matches!(props["t"], PropValue::Timestamp { .. }));
    }

    #[test]
    fn parse_write_parse_is_fixed_point() {
        let (first, _) = parse_seed(REVISION_SEED).unwrap();
        let rendered = write_seed(&first);
        let (second, _) = parse_seed(&rendered).unwrap();
        let rerendered = write_seed(&second);
        assert_eq!(rendered, rerendered);
        assert_eq!(first.nodes.len(), second.nodes.len());
        assert_eq!(first.edges.len(), second.edges.len());
        assert_eq!(first.active_kinds, second.active_kinds);
        // The third positional id of wasDerivedFrom moved into the
        // attribute list but kept its value.
        assert_eq!(second.edges[3].props["prov:activity"], PropValue::str("a"));
    }

    #[test]
    fn graph_roundtrip_through_provn() {
        let (seed, _) = parse_seed(REVISION_SEED).unwrap();
        let graph = seed.materialize().unwrap();
        let text = write_graph(&graph);
        let back = parse_graph(&text).unwrap();
        assert_eq!(back.node_count(), graph.node_count());
        assert_eq!(back.edge_count(), graph.edge_count());
        assert!(back.validate().is_empty());
        assert_eq!(write_graph(&back), text);
    }

    #[test]
    fn invalid_graph_loads_and_reports() {
        let text =
            "entity(e)\nactivity(a1)\nactivity(a2)\nwasGeneratedBy(e, a1)\nwasGeneratedBy(e, a2)";
        let graph = parse_graph(text).unwrap();
        let violations = graph.validate();
        assert_eq!(violations.len(), 1);
        assert!(matches!(
            violations[0],
            Violation::MultipleGeneration { .. }
        ));
    }

    #[test]
    fn signature_breach_loads_and_reports() {
        let graph = parse_graph("entity(e1)\nentity(e2)\nused(e1, e2)").unwrap();
        let violations = graph.validate();
        assert_eq!(violations.len(), 1);
        assert!(matches!(violations[0], Violation::SignatureMismatch { .. }));
    }
}
