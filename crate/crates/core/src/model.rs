//! Core PROV-DM vocabulary: node kinds, the 13 relation kinds and their
//! signature table, property values, and timestamps.

use std::fmt;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

/// The three PROV-DM node kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Entity,
    Activity,
    Agent,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Entity, NodeKind::Activity, NodeKind::Agent];

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Entity => "Entity",
            NodeKind::Activity => "Activity",
            NodeKind::Agent => "Agent",
        }
    }

    /// Case-insensitive lookup by name.
    pub fn parse(s: &str) -> Option<NodeKind> {
        NodeKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The 13 PROV relation kinds handled by the generator.
///
/// The source of an edge is always the first argument of the corresponding
/// PROV-N statement (the subject), e.g. `used(a, e)` is an edge from the
/// activity `a` to the entity `e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationKind {
    WasGeneratedBy,
    Used,
    WasInformedBy,
    WasStartedBy,
    WasEndedBy,
    WasInvalidatedBy,
    WasDerivedFrom,
    WasAttributedTo,
    WasAssociatedWith,
    ActedOnBehalfOf,
    WasInfluencedBy,
    AlternateOf,
    SpecializationOf,
}

/// Endpoint restriction for one side of a relation signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndpointKind {
    Fixed(NodeKind),
    Any,
}

impl EndpointKind {
    pub fn admits(self, kind: NodeKind) -> bool {
        match self {
            EndpointKind::Fixed(k) => k == kind,
            EndpointKind::Any => true,
        }
    }
}

impl RelationKind {
    pub const ALL: [RelationKind; 13] = [
        RelationKind::WasGeneratedBy,
        RelationKind::Used,
        RelationKind::WasInformedBy,
        RelationKind::WasStartedBy,
        RelationKind::WasEndedBy,
        RelationKind::WasInvalidatedBy,
        RelationKind::WasDerivedFrom,
        RelationKind::WasAttributedTo,
        RelationKind::WasAssociatedWith,
        RelationKind::ActedOnBehalfOf,
        RelationKind::WasInfluencedBy,
        RelationKind::AlternateOf,
        RelationKind::SpecializationOf,
    ];

    pub const COUNT: usize = 13;

    /// Dense index used by per-node relation counters.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<RelationKind> {
        RelationKind::ALL.get(i).copied()
    }

    /// CamelCase name, also the edge-kind token in the JSON serialization.
    pub fn name(self) -> &'static str {
        match self {
            RelationKind::WasGeneratedBy => "WasGeneratedBy",
            RelationKind::Used => "Used",
            RelationKind::WasInformedBy => "WasInformedBy",
            RelationKind::WasStartedBy => "WasStartedBy",
            RelationKind::WasEndedBy => "WasEndedBy",
            RelationKind::WasInvalidatedBy => "WasInvalidatedBy",
            RelationKind::WasDerivedFrom => "WasDerivedFrom",
            RelationKind::WasAttributedTo => "WasAttributedTo",
            RelationKind::WasAssociatedWith => "WasAssociatedWith",
            RelationKind::ActedOnBehalfOf => "ActedOnBehalfOf",
            RelationKind::WasInfluencedBy => "WasInfluencedBy",
            RelationKind::AlternateOf => "AlternateOf",
            RelationKind::SpecializationOf => "SpecializationOf",
        }
    }

    /// lowerCamel statement name used in PROV-N text.
    pub fn provn_name(self) -> &'static str {
        match self {
            RelationKind::WasGeneratedBy => "wasGeneratedBy",
            RelationKind::Used => "used",
            RelationKind::WasInformedBy => "wasInformedBy",
            RelationKind::WasStartedBy => "wasStartedBy",
            RelationKind::WasEndedBy => "wasEndedBy",
            RelationKind::WasInvalidatedBy => "wasInvalidatedBy",
            RelationKind::WasDerivedFrom => "wasDerivedFrom",
            RelationKind::WasAttributedTo => "wasAttributedTo",
            RelationKind::WasAssociatedWith => "wasAssociatedWith",
            RelationKind::ActedOnBehalfOf => "actedOnBehalfOf",
            RelationKind::WasInfluencedBy => "wasInfluencedBy",
            RelationKind::AlternateOf => "alternateOf",
            RelationKind::SpecializationOf => "specializationOf",
        }
    }

    /// SCREAMING_SNAKE relationship type used in emitted openCypher.
    pub fn cypher_name(self) -> &'static str {
        match self {
            RelationKind::WasGeneratedBy => "WAS_GENERATED_BY",
            RelationKind::Used => "USED",
            RelationKind::WasInformedBy => "WAS_INFORMED_BY",
            RelationKind::WasStartedBy => "WAS_STARTED_BY",
            RelationKind::WasEndedBy => "WAS_ENDED_BY",
            RelationKind::WasInvalidatedBy => "WAS_INVALIDATED_BY",
            RelationKind::WasDerivedFrom => "WAS_DERIVED_FROM",
            RelationKind::WasAttributedTo => "WAS_ATTRIBUTED_TO",
            RelationKind::WasAssociatedWith => "WAS_ASSOCIATED_WITH",
            RelationKind::ActedOnBehalfOf => "ACTED_ON_BEHALF_OF",
            RelationKind::WasInfluencedBy => "WAS_INFLUENCED_BY",
            RelationKind::AlternateOf => "ALTERNATE_OF",
            RelationKind::SpecializationOf => "SPECIALIZATION_OF",
        }
    }

    /// Case-insensitive lookup by CamelCase name.
    pub fn parse(s: &str) -> Option<RelationKind> {
        RelationKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
    }

    /// Lookup by PROV-N statement name (case-sensitive, as in the grammar).
    pub fn parse_provn(s: &str) -> Option<RelationKind> {
        RelationKind::ALL.into_iter().find(|k| k.provn_name() == s)
    }

    /// The (source, target) node-kind signature.
    ///
    /// The source is the subject of the PROV-N statement: generation points
    /// Entity -> Activity, usage points Activity -> Entity, and so on.
    /// WasInfluencedBy admits any kind pair.
    pub fn signature(self) -> (EndpointKind, EndpointKind) {
        use EndpointKind::{Any, Fixed};
        use NodeKind::{Activity, Agent, Entity};
        match self {
            RelationKind::WasGeneratedBy => (Fixed(Entity), Fixed(Activity)),
            RelationKind::Used => (Fixed(Activity), Fixed(Entity)),
            RelationKind::WasInformedBy => (Fixed(Activity), Fixed(Activity)),
            RelationKind::WasStartedBy => (Fixed(Activity), Fixed(Entity)),
            RelationKind::WasEndedBy => (Fixed(Activity), Fixed(Entity)),
            RelationKind::WasInvalidatedBy => (Fixed(Entity), Fixed(Activity)),
            RelationKind::WasDerivedFrom => (Fixed(Entity), Fixed(Entity)),
            RelationKind::WasAttributedTo => (Fixed(Entity), Fixed(Agent)),
            RelationKind::WasAssociatedWith => (Fixed(Activity), Fixed(Agent)),
            RelationKind::ActedOnBehalfOf => (Fixed(Agent), Fixed(Agent)),
            RelationKind::WasInfluencedBy => (Any, Any),
            RelationKind::AlternateOf => (Fixed(Entity), Fixed(Entity)),
            RelationKind::SpecializationOf => (Fixed(Entity), Fixed(Entity)),
        }
    }

    /// Whether an edge of this kind may run from `src` to `dst`.
    pub fn admits(self, src: NodeKind, dst: NodeKind) -> bool {
        let (s, d) = self.signature();
        s.admits(src) && d.admits(dst)
    }

    /// The node kind a grow-source rule creates, if the source side is fixed.
    pub fn source_kind(self) -> Option<NodeKind> {
        match self.signature().0 {
            EndpointKind::Fixed(k) => Some(k),
            EndpointKind::Any => None,
        }
    }

    pub fn target_kind(self) -> Option<NodeKind> {
        match self.signature().1 {
            EndpointKind::Fixed(k) => Some(k),
            EndpointKind::Any => None,
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An ISO-8601 timestamp that keeps its original text.
///
/// The text is the identity of the value (so round-trips are byte-lossless);
/// the parsed instant is used for ordering checks only. Supported forms are
/// `YYYY-MM-DDTHH:MM:SS` with optional fractional seconds and an optional
/// `Z` or `±HH:MM` offset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Timestamp {
    text: String,
}

impl Timestamp {
    pub fn parse(text: &str) -> Result<Timestamp, TimestampError> {
        parse_instant(text)?;
        Ok(Timestamp {
            text: text.to_string(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// UTC-normalized instant, for ordering.
    pub fn instant(&self) -> NaiveDateTime {
        parse_instant(&self.text).expect("validated at construction")
    }

    pub fn is_before_or_equal(&self, other: &Timestamp) -> bool {
        self.instant() <= other.instant()
    }
}

fn parse_instant(text: &str) -> Result<NaiveDateTime, TimestampError> {
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(text) {
        return Ok(dt.naive_utc());
    }
    NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M:%S%.f").map_err(|_| TimestampError {
        text: text.to_string(),
    })
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("invalid ISO-8601 timestamp: {text:?}")]
pub struct TimestampError {
    pub text: String,
}

impl TryFrom<String> for Timestamp {
    type Error = TimestampError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Timestamp::parse(&s)
    }
}

impl From<Timestamp> for String {
    fn from(t: Timestamp) -> String {
        t.text
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// A property value attached to a node or edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PropValue {
    Bool(bool),
    Int(i64),
    Decimal(f64),
    /// Timestamps serialize as `{"ts": "..."}` to stay distinguishable
    /// from plain strings.
    Timestamp {
        ts: Timestamp,
    },
    Str(String),
}

impl PropValue {
    pub fn str(s: impl Into<String>) -> PropValue {
        PropValue::Str(s.into())
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            PropValue::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Rendered as a PROV-N attribute literal.
    pub fn provn_literal(&self) -> String {
        match self {
            PropValue::Str(s) => format!("\"{}\"", escape_quotes(s)),
            PropValue::Int(i) => i.to_string(),
            PropValue::Decimal(d) => format_decimal(*d),
            PropValue::Bool(b) => b.to_string(),
            PropValue::Timestamp { ts } => format!("\"{}\"", ts.as_str()),
        }
    }

    /// Rendered as an openCypher literal.
    pub fn cypher_literal(&self) -> String {
        match self {
            PropValue::Str(s) => format!("\"{}\"", escape_quotes(s)),
            PropValue::Int(i) => i.to_string(),
            PropValue::Decimal(d) => format_decimal(*d),
            PropValue::Bool(b) => b.to_string(),
            PropValue::Timestamp { ts } => format!("\"{}\"", ts.as_str()),
        }
    }
}

pub(crate) fn escape_quotes(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Shortest text that parses back to the same f64, always with a decimal
/// point or exponent so it stays distinguishable from an integer literal.
pub(crate) fn format_decimal(d: f64) -> String {
    let s = format!("{d:?}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

/// Property maps preserve insertion order, which makes every serialization
/// byte-deterministic.
pub type PropMap = indexmap::IndexMap<String, PropValue>;
