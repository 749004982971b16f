//! The constraint DSL: a plain-english cardinality language over graph
//! nodes.
//!
//! A statement has three clauses: a determiner (which nodes), an imperative
//! (a requirement plus a cardinality qualifier), and an optional when/unless
//! condition. Example:
//!
//! ```text
//! an Agent has relationship "WasAssociatedWith" between 1, 1000 times,
//!     with distribution gamma(2.0, 3.0), unless it has relationship
//!     "ActedOnBehalfOf";
//! ```

use std::fmt;

use serde::Serialize;

use crate::graph::{Direction, GraphError, NodeId, ProvGraph};
use crate::model::{NodeKind, PropValue, RelationKind};
use crate::rng::RngStream;

/// Which nodes a constraint applies to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Determiner {
    /// "an Entity": every node of the kind.
    Variable { kind: NodeKind },
    /// "the Agent, a1": every node of the kind, binding `var` to the node
    /// itself for use in the condition.
    Invariable { kind: NodeKind, var: String },
}

impl Determiner {
    pub fn kind(&self) -> NodeKind {
        match self {
            Determiner::Variable { kind } | Determiner::Invariable { kind, .. } => *kind,
        }
    }

    pub fn var(&self) -> Option<&str> {
        match self {
            Determiner::Variable { .. } => None,
            Determiner::Invariable { var, .. } => Some(var),
        }
    }
}

/// The measured quantity of the imperative clause.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Requirement {
    InDegree,
    OutDegree,
    Degree,
    HasRelationship(RelationKind),
    HasProperty { name: String, value: PropValue },
}

/// Cardinality range of the imperative clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QualifierRange {
    AtMost(u64),
    AtLeast(u64),
    Exactly(u64),
    Between(u64, u64),
}

/// Range plus an optional sampling distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Qualifier {
    pub range: QualifierRange,
    pub distribution: Option<Distribution>,
}

impl Qualifier {
    pub fn lo(&self) -> u64 {
        match self.range {
            QualifierRange::AtMost(_) => 0,
            QualifierRange::AtLeast(n) | QualifierRange::Exactly(n) => n,
            QualifierRange::Between(lo, _) => lo,
        }
    }

    /// Upper bound; `None` means unbounded (AtLeast).
    pub fn hi(&self) -> Option<u64> {
        match self.range {
            QualifierRange::AtMost(n) | QualifierRange::Exactly(n) => Some(n),
            QualifierRange::AtLeast(_) => None,
            QualifierRange::Between(_, hi) => Some(hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Distribution {
    Gamma { shape: f64, scale: f64 },
    Uniform,
    Normal { mean: f64, std_dev: f64 },
}

/// When: the constraint applies iff the expression holds.
/// Unless: the constraint applies iff the expression fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Polarity {
    When,
    Unless,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition {
    pub polarity: Polarity,
    pub expr: ConditionExpr,
}

/// Subject of a condition atom: the determined node itself ("it") or a
/// bound variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Subject {
    SelfNode,
    Var(String),
}

/// "with the Activity, a1" inside a relationship atom: binds `var` to a
/// partner node of `kind` reached over the named relation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartnerBinding {
    pub kind: NodeKind,
    pub var: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ConditionExpr {
    And(Box<ConditionExpr>, Box<ConditionExpr>),
    Or(Box<ConditionExpr>, Box<ConditionExpr>),
    HasRelationship {
        subject: Subject,
        kind: RelationKind,
        binds: Option<PartnerBinding>,
    },
    HasProperty {
        subject: Subject,
        name: String,
        value: PropValue,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constraint {
    pub determiner: Determiner,
    pub requirement: Requirement,
    pub qualifier: Qualifier,
    pub condition: Option<Condition>,
}

/// Outcome of measuring a requirement against its qualifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RequirementStatus {
    Satisfied,
    BelowMinimum,
    AtMaximum,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ConstraintError {
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
    #[error("unknown node kind {name:?} at line {line}, column {col}")]
    UnknownNodeKind {
        line: usize,
        col: usize,
        name: String,
    },
    #[error("unbound variable {name:?} at line {line}, column {col}")]
    UnboundVariable {
        line: usize,
        col: usize,
        name: String,
    },
    #[error("invalid range {lo}..{hi} at line {line}, column {col}: lower bound exceeds upper")]
    InvalidRange {
        line: usize,
        col: usize,
        lo: u64,
        hi: u64,
    },
    #[error("unknown node {node}")]
    UnknownNode { node: NodeId },
}

impl From<GraphError> for ConstraintError {
    fn from(e: GraphError) -> ConstraintError {
        match e {
            GraphError::UnknownNode { node } => ConstraintError::UnknownNode { node },
            other => panic!("unexpected graph error during evaluation: {other}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    /// Raw lexeme; kept textual so integer values survive without an f64
    /// detour and "2.0" stays distinguishable from "2".
    Number(String),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Semicolon,
    Colon,
    Equals,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

/// A word token is a negative number when it is '-' followed by a digit
/// and the whole lexeme parses. The digit requirement keeps "-inf" and
/// bare "-" out.
fn is_negative_number(w: &str) -> bool {
    let mut chars = w.chars();
    chars.next() == Some('-')
        && chars.next().is_some_and(|c| c.is_ascii_digit())
        && w.parse::<f64>().is_ok()
}

/// A numeric lexeme with '.' or an exponent is a decimal; otherwise it is
/// an integer when it fits, and a decimal past the i64 range.
fn number_value(raw: &str) -> PropValue {
    if !raw.contains(['.', 'e', 'E']) {
        if let Ok(i) = raw.parse::<i64>() {
            return PropValue::Int(i);
        }
    }
    PropValue::Decimal(raw.parse::<f64>().expect("caller validated the number"))
}

fn lex(text: &str) -> Result<Vec<Spanned>, ConstraintError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        let bump = |c: char, line: &mut usize, col: &mut usize| {
            if c == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
        };
        match c {
            '#' => {
                for c in chars.by_ref() {
                    bump(c, &mut line, &mut col);
                    if c == '\n' {
                        break;
                    }
                }
            }
            c if c.is_whitespace() => {
                chars.next();
                bump(c, &mut line, &mut col);
            }
            '"' => {
                chars.next();
                bump('"', &mut line, &mut col);
                let mut s = String::new();
                let mut closed = false;
                while let Some(c) = chars.next() {
                    bump(c, &mut line, &mut col);
                    match c {
                        '\\' => {
                            if let Some(e) = chars.next() {
                                bump(e, &mut line, &mut col);
                                s.push(e);
                            }
                        }
                        '"' => {
                            closed = true;
                            break;
                        }
                        other => s.push(other),
                    }
                }
                if !closed {
                    return Err(ConstraintError::Syntax {
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
            '{' | '}' | '(' | ')' | ',' | ';' | ':' | '=' => {
                chars.next();
                bump(c, &mut line, &mut col);
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    ';' => Tok::Semicolon,
                    ':' => Tok::Colon,
                    _ => Tok::Equals,
                };
                out.push(Spanned {
                    tok,
                    line: tline,
                    col: tcol,
                });
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() || c == '.' {
                        s.push(c);
                        chars.next();
                        bump(c, &mut line, &mut col);
                    } else {
                        break;
                    }
                }
                // Exponent suffix, only if a complete one follows; a bare
                // trailing "e" belongs to the next word token.
                if matches!(chars.peek(), Some('e' | 'E')) {
                    let mut probe = chars.clone();
                    let mut exp = String::new();
                    exp.push(probe.next().expect("peeked"));
                    if let Some(&sign @ ('+' | '-')) = probe.peek() {
                        exp.push(sign);
                        probe.next();
                    }
                    let mut has_digits = false;
                    while let Some(&d) = probe.peek() {
                        if d.is_ascii_digit() {
                            has_digits = true;
                            exp.push(d);
                            probe.next();
                        } else {
                            break;
                        }
                    }
                    if has_digits {
                        for c in exp.chars() {
                            chars.next();
                            bump(c, &mut line, &mut col);
                        }
                        s.push_str(&exp);
                    }
                }
                if s.parse::<f64>().is_err() {
                    return Err(ConstraintError::Syntax {
                        line: tline,
                        col: tcol,
                        message: format!("malformed number {s:?}"),
                    });
                }
                out.push(Spanned {
                    tok: Tok::Number(s),
                    line: tline,
                    col: tcol,
                });
            }
            c if c.is_alphanumeric() || c == '_' || c == '.' || c == '-' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' || c == '.' || c == '-' {
                        s.push(c);
                        chars.next();
                        bump(c, &mut line, &mut col);
                    } else {
                        break;
                    }
                }
                out.push(Spanned {
                    tok: Tok::Word(s),
                    line: tline,
                    col: tcol,
                });
            }
            other => {
                return Err(ConstraintError::Syntax {
                    line: tline,
                    col: tcol,
                    message: format!("unexpected character {other:?}"),
                });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn peek2(&self) -> Option<&Spanned> {
        self.toks.get(self.pos + 1)
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> (usize, usize) {
        match self.peek() {
            Some(t) => (t.line, t.col),
            None => self.toks.last().map(|t| (t.line, t.col)).unwrap_or((1, 1)),
        }
    }

    fn err(&self, message: impl Into<String>) -> ConstraintError {
        let (line, col) = self.here();
        ConstraintError::Syntax {
            line,
            col,
            message: message.into(),
        }
    }

    /// Consume a keyword (case-insensitive). Errors if absent.
    fn expect_kw(&mut self, kw: &str) -> Result<(), ConstraintError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.err(format!("expected keyword {kw:?}")))
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if let Some(Spanned {
            tok: Tok::Word(w), ..
        }) = self.peek()
        {
            if w.eq_ignore_ascii_case(kw) {
                self.pos += 1;
                return true;
            }
        }
        false
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek().map(|t| &t.tok) == Some(tok) {
            self.pos += 1;
            return true;
        }
        false
    }

    fn skip_commas(&mut self) {
        while self.eat(&Tok::Comma) {}
    }

    fn word(&mut self, what: &str) -> Result<(String, usize, usize), ConstraintError> {
        match self.next() {
            Some(Spanned {
                tok: Tok::Word(w),
                line,
                col,
            }) => Ok((w, line, col)),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.err(format!("expected {what}")))
            }
        }
    }

    fn node_kind(&mut self) -> Result<NodeKind, ConstraintError> {
        let (w, line, col) = self.word("a node kind")?;
        NodeKind::parse(&w).ok_or(ConstraintError::UnknownNodeKind { line, col, name: w })
    }

    fn count(&mut self) -> Result<u64, ConstraintError> {
        match self.next() {
            Some(Spanned {
                tok: Tok::Number(raw),
                line,
                col,
            }) => raw.parse::<u64>().map_err(|_| ConstraintError::Syntax {
                line,
                col,
                message: format!("expected a non-negative integer count, got {raw}"),
            }),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.err("expected a count"))
            }
        }
    }

    fn float(&mut self) -> Result<f64, ConstraintError> {
        match self.next() {
            Some(Spanned {
                tok: Tok::Number(raw),
                ..
            }) => Ok(raw.parse::<f64>().expect("lexer validated the number")),
            // Negative numbers lex as words since '-' is a name character.
            Some(Spanned {
                tok: Tok::Word(w), ..
            }) if is_negative_number(&w) => Ok(w.parse::<f64>().expect("validated")),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.err("expected a number"))
            }
        }
    }

    fn determiner(&mut self) -> Result<Determiner, ConstraintError> {
        if self.eat_kw("an") || self.eat_kw("a") {
            let kind = self.node_kind()?;
            Ok(Determiner::Variable { kind })
        } else if self.eat_kw("the") {
            let kind = self.node_kind()?;
            self.skip_commas();
            let (var, _, _) = self.word("a variable name")?;
            Ok(Determiner::Invariable { kind, var })
        } else {
            Err(self.err("expected a determiner (\"an <Kind>\" or \"the <Kind>, <var>\")"))
        }
    }

    fn relation_name(&mut self) -> Result<RelationKind, ConstraintError> {
        match self.next() {
            Some(Spanned {
                tok: Tok::Str(s),
                line,
                col,
            }) => RelationKind::parse(&s).ok_or(ConstraintError::UnknownRelation {
                line,
                col,
                name: s,
            }),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.err("expected a quoted relation name"))
            }
        }
    }

    /// `{name="value"}` or `{name:"value"}`; the name may itself be a
    /// colon-qualified qname or a quoted string.
    fn property_literal(&mut self) -> Result<(String, PropValue), ConstraintError> {
        if !self.eat(&Tok::LBrace) {
            return Err(self.err("expected a property literal in braces"));
        }
        let mut name = match self.next() {
            Some(Spanned {
                tok: Tok::Word(w), ..
            }) => w,
            Some(Spanned {
                tok: Tok::Str(s), ..
            }) => s,
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return Err(self.err("expected a property name"));
            }
        };
        // Colons extend the name while a word follows (prov:type); a colon
        // followed by a value is the name/value separator.
        loop {
            if self.eat(&Tok::Equals) {
                break;
            }
            if self.peek().map(|t| &t.tok) == Some(&Tok::Colon) {
                if let Some(Spanned {
                    tok: Tok::Word(w), ..
                }) = self.peek2()
                {
                    let w = w.clone();
                    self.pos += 2;
                    name.push(':');
                    name.push_str(&w);
                    continue;
                }
                self.pos += 1;
                break;
            }
            return Err(self.err("expected ':' or '=' after property name"));
        }
        let value = match self.next() {
            Some(Spanned {
                tok: Tok::Str(s), ..
            }) => PropValue::Str(s),
            Some(Spanned {
                tok: Tok::Number(raw),
                ..
            }) => number_value(&raw),
            Some(Spanned {
                tok: Tok::Word(w),
                line,
                col,
            }) => match w.to_ascii_lowercase().as_str() {
                "true" => PropValue::Bool(true),
                "false" => PropValue::Bool(false),
                _ if is_negative_number(&w) => number_value(&w),
                _ => {
                    return Err(ConstraintError::Syntax {
                        line,
                        col,
                        message: format!("expected a property value, got bare word {w:?}"),
                    });
                }
            },
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return Err(self.err("expected a property value"));
            }
        };
        if !self.eat(&Tok::RBrace) {
            return Err(self.err("expected '}' after property value"));
        }
        Ok((name, value))
    }

    fn requirement(&mut self) -> Result<Requirement, ConstraintError> {
        self.expect_kw("has")?;
        if self.eat_kw("in") {
            self.expect_kw("degree")?;
            Ok(Requirement::InDegree)
        } else if self.eat_kw("out") {
            self.expect_kw("degree")?;
            Ok(Requirement::OutDegree)
        } else if self.eat_kw("degree") {
            Ok(Requirement::Degree)
        } else if self.eat_kw("relationship") {
            Ok(Requirement::HasRelationship(self.relation_name()?))
        } else if self.eat_kw("property") {
            let (name, value) = self.property_literal()?;
            Ok(Requirement::HasProperty { name, value })
        } else {
            Err(self.err(
                "expected a requirement (in degree, out degree, degree, relationship, property)",
            ))
        }
    }

    fn qualifier(&mut self) -> Result<Qualifier, ConstraintError> {
        let range = if self.eat_kw("at") {
            if self.eat_kw("most") {
                QualifierRange::AtMost(self.count()?)
            } else if self.eat_kw("least") {
                QualifierRange::AtLeast(self.count()?)
            } else {
                return Err(self.err("expected \"at most\" or \"at least\""));
            }
        } else if self.eat_kw("exactly") {
            QualifierRange::Exactly(self.count()?)
        } else if self.eat_kw("between") {
            let (line, col) = self.here();
            let lo = self.count()?;
            self.skip_commas();
            let hi = self.count()?;
            if lo > hi {
                return Err(ConstraintError::InvalidRange { line, col, lo, hi });
            }
            QualifierRange::Between(lo, hi)
        } else {
            return Err(self.err("expected a qualifier (at most/at least/exactly/between)"));
        };
        self.eat_kw("times");
        self.skip_commas();
        let distribution = if self.eat_kw("with") {
            self.expect_kw("distribution")?;
            let (here_line, here_col) = self.here();
            let (family, _, _) = self.word("a distribution family")?;
            let dist = match family.to_ascii_lowercase().as_str() {
                "uniform" => Distribution::Uniform,
                "gamma" => {
                    let (shape, scale) = self.two_params()?;
                    if shape <= 0.0 || scale <= 0.0 {
                        return Err(ConstraintError::Syntax {
                            line: here_line,
                            col: here_col,
                            message: "gamma parameters must be positive".to_string(),
                        });
                    }
                    Distribution::Gamma { shape, scale }
                }
                "normal" => {
                    let (mean, std_dev) = self.two_params()?;
                    if std_dev <= 0.0 {
                        return Err(ConstraintError::Syntax {
                            line: here_line,
                            col: here_col,
                            message: "normal standard deviation must be positive".to_string(),
                        });
                    }
                    Distribution::Normal { mean, std_dev }
                }
                other => {
                    return Err(ConstraintError::Syntax {
                        line: here_line,
                        col: here_col,
                        message: format!(
                            "unknown distribution {other:?} (expected gamma, uniform, or normal)"
                        ),
                    });
                }
            };
            if matches!(range, QualifierRange::Exactly(_)) {
                return Err(ConstraintError::Syntax {
                    line: here_line,
                    col: here_col,
                    message: "a distribution cannot qualify an exact count".to_string(),
                });
            }
            Some(dist)
        } else {
            None
        };
        Ok(Qualifier {
            range,
            distribution,
        })
    }

    fn two_params(&mut self) -> Result<(f64, f64), ConstraintError> {
        if !self.eat(&Tok::LParen) {
            return Err(self.err("expected '('"));
        }
        let a = self.float()?;
        self.skip_commas();
        let b = self.float()?;
        if !self.eat(&Tok::RParen) {
            return Err(self.err("expected ')'"));
        }
        Ok((a, b))
    }

    fn condition(&mut self, scope: &mut Vec<String>) -> Result<Option<Condition>, ConstraintError> {
        let polarity = if self.eat_kw("when") {
            Polarity::When
        } else if self.eat_kw("unless") {
            Polarity::Unless
        } else {
            return Ok(None);
        };
        let expr = self.cond_expr(scope)?;
        Ok(Some(Condition { polarity, expr }))
    }

    /// Connective chain; mixing AND and OR at one level requires parentheses.
    fn cond_expr(&mut self, scope: &mut Vec<String>) -> Result<ConditionExpr, ConstraintError> {
        let mut expr = self.cond_term(scope)?;
        let mut seen: Option<bool> = None;
        loop {
            self.skip_commas();
            let is_and = if self.eat_kw("and") {
                true
            } else if self.eat_kw("or") {
                false
            } else {
                break;
            };
            if let Some(prev) = seen {
                if prev != is_and {
                    return Err(
                        self.err("mixed AND/OR requires explicit parentheses to fix grouping")
                    );
                }
            }
            seen = Some(is_and);
            let rhs = self.cond_term(scope)?;
            expr = if is_and {
                ConditionExpr::And(Box::new(expr), Box::new(rhs))
            } else {
                ConditionExpr::Or(Box::new(expr), Box::new(rhs))
            };
        }
        Ok(expr)
    }

    fn cond_term(&mut self, scope: &mut Vec<String>) -> Result<ConditionExpr, ConstraintError> {
        if self.eat(&Tok::LParen) {
            let inner = self.cond_expr(scope)?;
            if !self.eat(&Tok::RParen) {
                return Err(self.err("expected ')'"));
            }
            return Ok(inner);
        }
        self.cond_atom(scope)
    }

    fn cond_atom(&mut self, scope: &mut Vec<String>) -> Result<ConditionExpr, ConstraintError> {
        let subject = if self.eat_kw("it") {
            Subject::SelfNode
        } else {
            let (name, line, col) = self.word("a condition subject (\"it\" or a variable)")?;
            if !scope.iter().any(|v| v == &name) {
                return Err(ConstraintError::UnboundVariable { line, col, name });
            }
            Subject::Var(name)
        };
        self.expect_kw("has")?;
        if self.eat_kw("relationship") {
            let kind = self.relation_name()?;
            let binds = if self.eat_kw("with") {
                if !(self.eat_kw("the") || self.eat_kw("an") || self.eat_kw("a")) {
                    return Err(self.err("expected an article before the bound kind"));
                }
                let bind_kind = self.node_kind()?;
                self.skip_commas();
                let (var, _, _) = self.word("a variable name")?;
                scope.push(var.clone());
                Some(PartnerBinding {
                    kind: bind_kind,
                    var,
                })
            } else {
                None
            };
            Ok(ConditionExpr::HasRelationship {
                subject,
                kind,
                binds,
            })
        } else if self.eat_kw("property") {
            let (name, value) = self.property_literal()?;
            Ok(ConditionExpr::HasProperty {
                subject,
                name,
                value,
            })
        } else {
            Err(self.err("expected \"relationship\" or \"property\" after \"has\""))
        }
    }

    fn statement(&mut self) -> Result<Constraint, ConstraintError> {
        let determiner = self.determiner()?;
        let requirement = self.requirement()?;
        self.skip_commas();
        let qualifier = self.qualifier()?;
        self.skip_commas();
        let mut scope: Vec<String> = determiner
            .var()
            .map(|v| v.to_string())
            .into_iter()
            .collect();
        let condition = self.condition(&mut scope)?;
        self.skip_commas();
        if !self.eat(&Tok::Semicolon) {
            return Err(self.err("expected ';' to end the statement"));
        }
        Ok(Constraint {
            determiner,
            requirement,
            qualifier,
            condition,
        })
    }
}

/// Parse a constraint file: one statement per semicolon, "#" comments
/// ignored.
pub fn parse_constraints(text: &str) -> Result<Vec<Constraint>, ConstraintError> {
    let toks = lex(text)?;
    let mut parser = Parser { toks, pos: 0 };
    let mut out = Vec::new();
    while parser.peek().is_some() {
        out.push(parser.statement()?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Rendering

fn render_prop_name(name: &str) -> String {
    let bare_safe = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_alphanumeric() || matches!(c, '_' | '.' | '-' | ':'));
    if bare_safe {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('"', "\\\""))
    }
}

fn render_prop(name: &str, value: &PropValue) -> String {
    format!("{{{}={}}}", render_prop_name(name), value.provn_literal())
}

fn render_float(f: f64) -> String {
    crate::model::format_decimal(f)
}

impl fmt::Display for Requirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Requirement::InDegree => write!(f, "has in degree"),
            Requirement::OutDegree => write!(f, "has out degree"),
            Requirement::Degree => write!(f, "has degree"),
            Requirement::HasRelationship(k) => write!(f, "has relationship \"{}\"", k.name()),
            Requirement::HasProperty { name, value } => {
                write!(f, "has property {}", render_prop(name, value))
            }
        }
    }
}

impl Requirement {
    /// "times" reads naturally after relationship/property counts but not
    /// after degree counts; the parser accepts both.
    fn wants_times(&self) -> bool {
        matches!(
            self,
            Requirement::HasRelationship(_) | Requirement::HasProperty { .. }
        )
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Gamma { shape, scale } => {
                write!(
                    f,
                    "gamma({}, {})",
                    render_float(*shape),
                    render_float(*scale)
                )
            }
            Distribution::Uniform => write!(f, "uniform"),
            Distribution::Normal { mean, std_dev } => {
                write!(
                    f,
                    "normal({}, {})",
                    render_float(*mean),
                    render_float(*std_dev)
                )
            }
        }
    }
}

impl fmt::Display for Qualifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.range {
            QualifierRange::AtMost(n) => write!(f, "at most {n}")?,
            QualifierRange::AtLeast(n) => write!(f, "at least {n}")?,
            QualifierRange::Exactly(n) => write!(f, "exactly {n}")?,
            QualifierRange::Between(lo, hi) => write!(f, "between {lo}, {hi}")?,
        }
        if let Some(dist) = &self.distribution {
            write!(f, " with distribution {dist}")?;
        }
        Ok(())
    }
}

/// `parent` is (parent is AND, this is the right operand). The grammar is
/// left-associative with no AND/OR precedence, so a connective child needs
/// parentheses when its operator differs from the parent's, or when it sits
/// in the right operand (a bare right-side chain would reparse
/// left-leaning).
fn render_expr(expr: &ConditionExpr, parent: Option<(bool, bool)>, out: &mut String) {
    let subject_text = |s: &Subject| match s {
        Subject::SelfNode => "it".to_string(),
        Subject::Var(v) => v.clone(),
    };
    match expr {
        ConditionExpr::And(a, b) | ConditionExpr::Or(a, b) => {
            let is_and = matches!(expr, ConditionExpr::And(..));
            let needs_parens = parent
                .map(|(parent_is_and, is_right)| parent_is_and != is_and || is_right)
                .unwrap_or(false);
            if needs_parens {
                out.push('(');
            }
            render_expr(a, Some((is_and, false)), out);
            out.push_str(if is_and { " AND " } else { " OR " });
            render_expr(b, Some((is_and, true)), out);
            if needs_parens {
                out.push(')');
            }
        }
        ConditionExpr::HasRelationship {
            subject,
            kind,
            binds,
        } => {
            out.push_str(&subject_text(subject));
            out.push_str(" has relationship \"");
            out.push_str(kind.name());
            out.push('"');
            if let Some(b) = binds {
                out.push_str(&format!(" with the {}, {}", b.kind.name(), b.var));
            }
        }
        ConditionExpr::HasProperty {
            subject,
            name,
            value,
        } => {
            out.push_str(&subject_text(subject));
            out.push_str(" has property ");
            out.push_str(&render_prop(name, value));
        }
    }
}

impl Constraint {
    /// Canonical DSL text; parsing it back yields an equal AST.
    pub fn render(&self) -> String {
        let mut s = String::new();
        match &self.determiner {
            Determiner::Variable { kind } => s.push_str(&format!("an {}", kind.name())),
            Determiner::Invariable { kind, var } => {
                s.push_str(&format!("the {}, {}", kind.name(), var))
            }
        }
        s.push(' ');
        s.push_str(&self.requirement.to_string());
        s.push(' ');
        match self.qualifier.range {
            QualifierRange::AtMost(n) => s.push_str(&format!("at most {n}")),
            QualifierRange::AtLeast(n) => s.push_str(&format!("at least {n}")),
            QualifierRange::Exactly(n) => s.push_str(&format!("exactly {n}")),
            QualifierRange::Between(lo, hi) => s.push_str(&format!("between {lo}, {hi}")),
        }
        if self.requirement.wants_times() {
            s.push_str(" times");
        }
        if let Some(dist) = &self.qualifier.distribution {
            s.push_str(&format!(", with distribution {dist}"));
        }
        if let Some(cond) = &self.condition {
            s.push_str(match cond.polarity {
                Polarity::When => ", when ",
                Polarity::Unless => ", unless ",
            });
            render_expr(&cond.expr, None, &mut s);
        }
        s.push(';');
        s
    }
}

/// Render a whole constraint set, one statement per line.
pub fn render_constraints(constraints: &[Constraint]) -> String {
    let mut s = String::new();
    for c in constraints {
        s.push_str(&c.render());
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------------------------
// Evaluation

type Env = Vec<(String, NodeId)>;

fn lookup(env: &Env, subject: &Subject, self_node: NodeId) -> NodeId {
    match subject {
        Subject::SelfNode => self_node,
        Subject::Var(name) => env
            .iter()
            .rev()
            .find(|(v, _)| v == name)
            .map(|(_, id)| *id)
            .expect("parser guarantees variables are bound"),
    }
}

/// Backtracking satisfiability: true iff some assignment of the bound
/// variables extends `env` so that `expr` holds and `k` accepts it.
fn solve(
    graph: &ProvGraph,
    self_node: NodeId,
    expr: &ConditionExpr,
    env: &Env,
    k: &dyn Fn(&Env) -> bool,
) -> bool {
    match expr {
        ConditionExpr::And(a, b) => solve(graph, self_node, a, env, &|env2| {
            solve(graph, self_node, b, env2, k)
        }),
        ConditionExpr::Or(a, b) => {
            solve(graph, self_node, a, env, k) || solve(graph, self_node, b, env, k)
        }
        ConditionExpr::HasProperty {
            subject,
            name,
            value,
        } => {
            let node = lookup(env, subject, self_node);
            let holds = graph
                .node(node)
                .map(|n| n.props.get(name) == Some(value))
                .unwrap_or(false);
            holds && k(env)
        }
        ConditionExpr::HasRelationship {
            subject,
            kind,
            binds,
        } => {
            let node = lookup(env, subject, self_node);
            match binds {
                None => {
                    let holds = graph
                        .degree(node, Direction::Both, Some(*kind))
                        .map(|d| d > 0)
                        .unwrap_or(false);
                    holds && k(env)
                }
                Some(binding) => {
                    let mut seen = Vec::new();
                    for &eid in graph
                        .incoming_edges(node)
                        .iter()
                        .chain(graph.outgoing_edges(node).iter())
                    {
                        let edge = graph.edge(eid).expect("adjacency is consistent");
                        if edge.kind != *kind {
                            continue;
                        }
                        let partner = if edge.src == node { edge.dst } else { edge.src };
                        if seen.contains(&partner) {
                            continue;
                        }
                        seen.push(partner);
                        let pk = graph.node(partner).map(|n| n.kind);
                        if pk != Some(binding.kind) {
                            continue;
                        }
                        let mut extended = env.clone();
                        extended.push((binding.var.clone(), partner));
                        if k(&extended) {
                            return true;
                        }
                    }
                    false
                }
            }
        }
    }
}

/// Whether the constraint applies to `node`: When-conditions require the
/// expression, Unless-conditions require its failure, no condition always
/// applies.
pub fn condition_holds(
    constraint: &Constraint,
    graph: &ProvGraph,
    node: NodeId,
) -> Result<bool, ConstraintError> {
    if graph.node(node).is_none() {
        return Err(ConstraintError::UnknownNode { node });
    }
    let Some(cond) = &constraint.condition else {
        return Ok(true);
    };
    let mut env: Env = Vec::new();
    if let Some(var) = constraint.determiner.var() {
        env.push((var.to_string(), node));
    }
    let raw = solve(graph, node, &cond.expr, &env, &|_| true);
    Ok(match cond.polarity {
        Polarity::When => raw,
        Polarity::Unless => !raw,
    })
}

/// The count a requirement measures on one node.
pub fn measured_count(
    requirement: &Requirement,
    graph: &ProvGraph,
    node: NodeId,
) -> Result<u64, ConstraintError> {
    Ok(match requirement {
        Requirement::InDegree => graph.degree(node, Direction::In, None)? as u64,
        Requirement::OutDegree => graph.degree(node, Direction::Out, None)? as u64,
        Requirement::Degree => graph.degree(node, Direction::Both, None)? as u64,
        Requirement::HasRelationship(kind) => {
            graph.degree(node, Direction::Both, Some(*kind))? as u64
        }
        Requirement::HasProperty { name, value } => {
            let node = graph
                .node(node)
                .ok_or(ConstraintError::UnknownNode { node })?;
            u64::from(node.props.get(name) == Some(value))
        }
    })
}

/// Compare the measured count against the qualifier range.
pub fn requirement_status(
    constraint: &Constraint,
    graph: &ProvGraph,
    node: NodeId,
) -> Result<RequirementStatus, ConstraintError> {
    let count = measured_count(&constraint.requirement, graph, node)?;
    Ok(status_of(&constraint.qualifier, count))
}

/// Status from a raw count: below the minimum, at (or past) the maximum, or
/// satisfied in between.
pub fn status_of(qualifier: &Qualifier, count: u64) -> RequirementStatus {
    if count < qualifier.lo() {
        RequirementStatus::BelowMinimum
    } else if qualifier.hi().is_some_and(|hi| count >= hi) {
        RequirementStatus::AtMaximum
    } else {
        RequirementStatus::Satisfied
    }
}

/// Draw a per-node target cardinality from the qualifier. Sampled values
/// are rounded to integers and clamped into the qualifier's range; without
/// a distribution the default is uniform over the range (degenerating to
/// the single bound for AtLeast).
pub fn sample_target(qualifier: &Qualifier, rng: &mut RngStream) -> u64 {
    let lo = qualifier.lo();
    let hi = qualifier.hi();
    match &qualifier.distribution {
        None | Some(Distribution::Uniform) => match hi {
            Some(hi) => rng.range_inclusive(lo, hi),
            None => lo,
        },
        Some(dist) => {
            let raw = match dist {
                Distribution::Gamma { shape, scale } => rng.gamma(*shape, *scale),
                Distribution::Normal { mean, std_dev } => rng.normal(*mean, *std_dev),
                Distribution::Uniform => unreachable!("handled above"),
            };
            let rounded = if raw.is_nan() || raw < 0.0 {
                0
            } else {
                raw.round().min(u64::MAX as f64) as u64
            };
            let clamped_lo = rounded.max(lo);
            match hi {
                Some(hi) => clamped_lo.min(hi),
                None => clamped_lo,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PropMap;

    fn table_row(text: &str) -> Constraint {
        let mut all = parse_constraints(text).expect("parse");
        assert_eq!(all.len(), 1);
        all.remove(0)
    }

    #[test]
    fn entity_in_degree_row() {
        let c = table_row("an Entity has in degree at most 1;");
        assert_eq!(
            c.determiner,
            Determiner::Variable {
                kind: NodeKind::Entity
            }
        );
        assert_eq!(c.requirement, Requirement::InDegree);
        assert_eq!(c.qualifier.range, QualifierRange::AtMost(1));
        assert!(c.qualifier.distribution.is_none());
        assert!(c.condition.is_none());
    }

    #[test]
    fn agent_association_row() {
        let c = table_row(
            "an Agent has relationship \"WasAssociatedWith\" between 1, 1000 times, \
             with distribution gamma(2.0, 3.0), unless it has relationship \"ActedOnBehalfOf\";",
        );
        assert_eq!(c.determiner.kind(), NodeKind::Agent);
        assert_eq!(
            c.requirement,
            Requirement::HasRelationship(RelationKind::WasAssociatedWith)
        );
        assert_eq!(c.qualifier.range, QualifierRange::Between(1, 1000));
        assert_eq!(
            c.qualifier.distribution,
            Some(Distribution::Gamma {
                shape: 2.0,
                scale: 3.0
            })
        );
        let cond = c.condition.unwrap();
        assert_eq!(cond.polarity, Polarity::Unless);
        assert_eq!(
            cond.expr,
            ConditionExpr::HasRelationship {
                subject: Subject::SelfNode,
                kind: RelationKind::ActedOnBehalfOf,
                binds: None,
            }
        );
    }

    #[test]
    fn activity_used_row_colon_property() {
        let c = table_row(
            "an Activity has relationship \"Used\" exactly 1 times, \
             unless it has property {prov_type:\"create\"};",
        );
        assert_eq!(c.qualifier.range, QualifierRange::Exactly(1));
        let cond = c.condition.unwrap();
        assert_eq!(
            cond.expr,
            ConditionExpr::HasProperty {
                subject: Subject::SelfNode,
                name: "prov_type".to_string(),
                value: PropValue::str("create"),
            }
        );
    }

    #[test]
    fn derivation_row_with_bound_variable() {
        let c = table_row(
            "an Entity has relationship \"WasDerivedFrom\", at least 1 times, \
             unless it has relationship \"WasGeneratedBy\" with the Activity, a1, \
             AND a1 has property {prov:type=\"create\"};",
        );
        assert_eq!(c.qualifier.range, QualifierRange::AtLeast(1));
        let cond = c.condition.unwrap();
        match cond.expr {
            ConditionExpr::And(a, b) => {
                assert_eq!(
                    *a,
                    ConditionExpr::HasRelationship {
                        subject: Subject::SelfNode,
                        kind: RelationKind::WasGeneratedBy,
                        binds: Some(PartnerBinding {
                            kind: NodeKind::Activity,
                            var: "a1".to_string(),
                        }),
                    }
                );
                assert_eq!(
                    *b,
                    ConditionExpr::HasProperty {
                        subject: Subject::Var("a1".to_string()),
                        name: "prov:type".to_string(),
                        value: PropValue::str("create"),
                    }
                );
            }
            other => panic!("expected AND, got {other:?}"),
        }
    }

    #[test]
    fn quoted_property_name() {
        let c = table_row(
            "an Activity has relationship \"Used\" exactly 1 times, \
             unless it has property {\"ex:name\":\"create\"};",
        );
        let cond = c.condition.unwrap();
        assert_eq!(
            cond.expr,
            ConditionExpr::HasProperty {
                subject: Subject::SelfNode,
                name: "ex:name".to_string(),
                value: PropValue::str("create"),
            }
        );
    }

    #[test]
    fn invalid_range_is_rejected() {
        let err = parse_constraints("an Entity has in degree between 5, 2 times;").unwrap_err();
        assert!(matches!(
            err,
            ConstraintError::InvalidRange { lo: 5, hi: 2, .. }
        ));
    }

    #[test]
    fn unknown_relation_is_rejected() {
        let err =
            parse_constraints("an Entity has relationship \"Frobnicated\" at most 1;").unwrap_err();
        assert!(matches!(err, ConstraintError::UnknownRelation { .. }));
    }

    #[test]
    fn unknown_node_kind_is_rejected() {
        let err = parse_constraints("an Widget has in degree at most 1;").unwrap_err();
        assert!(matches!(err, ConstraintError::UnknownNodeKind { .. }));
    }

    #[test]
    fn unbound_variable_is_rejected() {
        let err = parse_constraints(
            "an Entity has in degree at most 1, unless a2 has property {x=\"y\"};",
        )
        .unwrap_err();
        assert!(matches!(
            err,
            ConstraintError::UnboundVariable { name, .. } if name == "a2"
        ));
    }

    #[test]
    fn determiner_variable_binds_self() {
        let c = table_row("the Agent, ag has in degree at most 1, when ag has property {x=\"y\"};");
        assert_eq!(
            c.determiner,
            Determiner::Invariable {
                kind: NodeKind::Agent,
                var: "ag".to_string()
            }
        );
    }

    #[test]
    fn mixed_connectives_need_parens() {
        let err = parse_constraints(
            "an Entity has degree at most 3, when it has property {a=\"1\"} \
             AND it has property {b=\"2\"} OR it has property {c=\"3\"};",
        )
        .unwrap_err();
        assert!(matches!(err, ConstraintError::Syntax { .. }));
        let ok = parse_constraints(
            "an Entity has degree at most 3, when (it has property {a=\"1\"} \
             AND it has property {b=\"2\"}) OR it has property {c=\"3\"};",
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn comments_and_multiple_statements() {
        let text = "# wiki-style constraints\n\
                    an Entity has in degree at most 1;\n\
                    # second\n\
                    an Agent has relationship \"WasAssociatedWith\" at least 1 times;\n";
        let all = parse_constraints(text).unwrap();
        assert_eq!(all.len(), 2);
    }

    #[test]
    fn render_roundtrip_table_rows() {
        let texts = [
            "an Entity has in degree at most 1;",
            "an Agent has relationship \"WasAssociatedWith\" between 1, 1000 times, \
             with distribution gamma(2.0, 3.0), unless it has relationship \"ActedOnBehalfOf\";",
            "an Activity has relationship \"Used\" exactly 1 times, \
             unless it has property {\"ex:name\":\"create\"};",
            "an Entity has relationship \"WasDerivedFrom\", at least 1 times, \
             unless it has relationship \"WasGeneratedBy\" with the Activity, a1, \
             AND a1 has property {prov:type=\"create\"};",
            "an Activity has degree at most 5;",
            "the Entity, e has out degree between 0, 4, when (e has property {p=\"1\"} \
             OR e has property {q=\"2\"}) AND e has relationship \"Used\";",
        ];
        for text in texts {
            let first = table_row(text);
            let rendered = first.render();
            let second = table_row(&rendered);
            assert_eq!(first, second, "render of {text:?} was {rendered:?}");
            assert_eq!(rendered, second.render());
        }
    }

    fn agent_graph() -> (ProvGraph, NodeId) {
        let mut g = ProvGraph::new();
        let ag = g.add_node(NodeKind::Agent, PropMap::new());
        (g, ag)
    }

    #[test]
    fn unless_relationship_condition() {
        let c = table_row(
            "an Agent has relationship \"WasAssociatedWith\" between 1, 1000 times, \
             unless it has relationship \"ActedOnBehalfOf\";",
        );
        let (mut g, ag) = agent_graph();
        assert!(condition_holds(&c, &g, ag).unwrap());
        let boss = g.add_node(NodeKind::Agent, PropMap::new());
        g.add_edge(RelationKind::ActedOnBehalfOf, ag, boss, PropMap::new())
            .unwrap();
        assert!(!condition_holds(&c, &g, ag).unwrap());
        // The partner side also now has an incident ActedOnBehalfOf edge.
        assert!(!condition_holds(&c, &g, boss).unwrap());
    }

    #[test]
    fn missing_condition_always_applies() {
        let c = table_row("an Agent has in degree at most 1;");
        let (g, ag) = agent_graph();
        assert!(condition_holds(&c, &g, ag).unwrap());
    }

    #[test]
    fn unknown_node_errors() {
        let c = table_row("an Agent has in degree at most 1;");
        let (g, _) = agent_graph();
        assert!(matches!(
            condition_holds(&c, &g, NodeId(40)),
            Err(ConstraintError::UnknownNode { .. })
        ));
        assert!(matches!(
            requirement_status(&c, &g, NodeId(40)),
            Err(ConstraintError::UnknownNode { .. })
        ));
    }

    /// Exhaustive check of the bound-variable condition against a direct
    /// enumeration of assignments.
    #[test]
    fn bound_variable_condition_matches_brute_force() {
        let c = table_row(
            "an Entity has relationship \"WasDerivedFrom\", at least 1 times, \
             unless it has relationship \"WasGeneratedBy\" with the Activity, a1, \
             AND a1 has property {prov:type=\"create\"};",
        );
        // e1 generated by a creating activity; e2 generated by a plain one;
        // e3 not generated at all.
        let mut g = ProvGraph::new();
        let e1 = g.add_node(NodeKind::Entity, PropMap::new());
        let e2 = g.add_node(NodeKind::Entity, PropMap::new());
        let e3 = g.add_node(NodeKind::Entity, PropMap::new());
        let creator = g.add_node(
            NodeKind::Activity,
            [("prov:type".to_string(), PropValue::str("create"))]
                .into_iter()
                .collect(),
        );
        let editor = g.add_node(
            NodeKind::Activity,
            [("prov:type".to_string(), PropValue::str("edit"))]
                .into_iter()
                .collect(),
        );
        g.add_edge(RelationKind::WasGeneratedBy, e1, creator, PropMap::new())
            .unwrap();
        g.add_edge(RelationKind::WasGeneratedBy, e2, editor, PropMap::new())
            .unwrap();

        // Brute force: for each entity, enumerate all activities joined by a
        // WasGeneratedBy edge and test the property.
        let brute = |node: NodeId| -> bool {
            let mut expr_true = false;
            for edge in g.edges() {
                if edge.kind != RelationKind::WasGeneratedBy {
                    continue;
                }
                let partner = if edge.src == node {
                    Some(edge.dst)
                } else if edge.dst == node {
                    Some(edge.src)
                } else {
                    None
                };
                if let Some(p) = partner {
                    let n = g.node(p).unwrap();
                    if n.kind == NodeKind::Activity
                        && n.props.get("prov:type") == Some(&PropValue::str("create"))
                    {
                        expr_true = true;
                    }
                }
            }
            // Unless: the constraint applies when the expression fails.
            !expr_true
        };

        for e in [e1, e2, e3] {
            assert_eq!(condition_holds(&c, &g, e).unwrap(), brute(e), "node {e}");
        }
        assert!(!condition_holds(&c, &g, e1).unwrap());
        assert!(condition_holds(&c, &g, e2).unwrap());
        assert!(condition_holds(&c, &g, e3).unwrap());
    }

    #[test]
    fn requirement_status_boundaries() {
        let at_most = table_row("an Entity has in degree at most 1;");
        let between =
            table_row("an Agent has relationship \"WasAssociatedWith\" between 1, 1000 times;");
        let mut g = ProvGraph::new();
        let e = g.add_node(NodeKind::Entity, PropMap::new());
        let ag = g.add_node(NodeKind::Agent, PropMap::new());
        assert_eq!(
            requirement_status(&at_most, &g, e).unwrap(),
            RequirementStatus::Satisfied
        );
        assert_eq!(
            requirement_status(&between, &g, ag).unwrap(),
            RequirementStatus::BelowMinimum
        );
        let a = g.add_node(NodeKind::Activity, PropMap::new());
        g.add_edge(RelationKind::WasStartedBy, a, e, PropMap::new())
            .unwrap();
        assert_eq!(
            requirement_status(&at_most, &g, e).unwrap(),
            RequirementStatus::AtMaximum
        );
        g.add_edge(RelationKind::WasAssociatedWith, a, ag, PropMap::new())
            .unwrap();
        assert_eq!(
            requirement_status(&between, &g, ag).unwrap(),
            RequirementStatus::Satisfied
        );
    }

    #[test]
    fn status_is_monotone_in_count() {
        // Once AtMaximum, more matches never return to Satisfied.
        let q = Qualifier {
            range: QualifierRange::Between(2, 4),
            distribution: None,
        };
        let mut was_at_max = false;
        for count in 0..10 {
            let s = status_of(&q, count);
            if was_at_max {
                assert_eq!(s, RequirementStatus::AtMaximum);
            }
            was_at_max |= s == RequirementStatus::AtMaximum;
        }
    }

    #[test]
    fn property_requirement_counts_presence() {
        let c = table_row("an Activity has property {ex:flag=\"on\"} at most 0 times;");
        let mut g = ProvGraph::new();
        let plain = g.add_node(NodeKind::Activity, PropMap::new());
        let flagged = g.add_node(
            NodeKind::Activity,
            [("ex:flag".to_string(), PropValue::str("on"))]
                .into_iter()
                .collect(),
        );
        assert_eq!(
            requirement_status(&c, &g, plain).unwrap(),
            RequirementStatus::AtMaximum
        );
        assert_eq!(measured_count(&c.requirement, &g, plain).unwrap(), 0);
        assert_eq!(measured_count(&c.requirement, &g, flagged).unwrap(), 1);
    }

    #[test]
    fn sample_target_degenerate_cases() {
        let mut rng = RngStream::new(1);
        let exactly = Qualifier {
            range: QualifierRange::Exactly(1),
            distribution: None,
        };
        assert_eq!(sample_target(&exactly, &mut rng), 1);
        let tight = Qualifier {
            range: QualifierRange::Between(4, 4),
            distribution: Some(Distribution::Uniform),
        };
        assert_eq!(sample_target(&tight, &mut rng), 4);
    }

    #[test]
    fn sample_target_gamma_respects_range_and_mean() {
        let q = Qualifier {
            range: QualifierRange::Between(1, 1000),
            distribution: Some(Distribution::Gamma {
                shape: 2.0,
                scale: 3.0,
            }),
        };
        let mut rng = RngStream::new(99);
        let n = 100_000;
        let mut sum = 0u64;
        for _ in 0..n {
            let t = sample_target(&q, &mut rng);
            assert!((1..=1000).contains(&t));
            sum += t;
        }
        // Mean of clamp(round(X), 1, 1000) for X ~ gamma(2, 3) stays close
        // to the unclamped mean 6; allow generous slack for the clamp at 1.
        let mean = sum as f64 / n as f64;
        assert!((5.7..6.5).contains(&mean), "mean {mean}");
    }

    #[test]
    fn sample_target_at_least_clamps_below() {
        let q = Qualifier {
            range: QualifierRange::AtLeast(5),
            distribution: Some(Distribution::Normal {
                mean: 0.0,
                std_dev: 1.0,
            }),
        };
        let mut rng = RngStream::new(7);
        for _ in 0..1000 {
            assert!(sample_target(&q, &mut rng) >= 5);
        }
        let bare = Qualifier {
            range: QualifierRange::AtLeast(3),
            distribution: None,
        };
        assert_eq!(sample_target(&bare, &mut rng), 3);
    }

    #[test]
    fn unless_is_negation_of_when() {
        let unless = table_row(
            "an Agent has in degree at most 1, unless it has relationship \"ActedOnBehalfOf\";",
        );
        let when = table_row(
            "an Agent has in degree at most 1, when it has relationship \"ActedOnBehalfOf\";",
        );
        let (mut g, ag) = agent_graph();
        let boss = g.add_node(NodeKind::Agent, PropMap::new());
        g.add_edge(RelationKind::ActedOnBehalfOf, ag, boss, PropMap::new())
            .unwrap();
        for node in [ag, boss] {
            assert_eq!(
                condition_holds(&unless, &g, node).unwrap(),
                !condition_holds(&when, &g, node).unwrap()
            );
        }
    }
}
