//! Query descriptors and their canonical identity.
//!
//! Two descriptors are "the same query" for reuse purposes iff their
//! [`canonical_key`]s are equal. Privacy parameters never enter the key.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest::{CanonicalWriter, Hash256, HexDigestError};
use crate::dp::Schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum QueryKind {
    Count,
    Sum,
    Mean,
}

impl QueryKind {
    pub const ALL: [QueryKind; 3] = [QueryKind::Count, QueryKind::Sum, QueryKind::Mean];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryKind::Count => "COUNT",
            QueryKind::Sum => "SUM",
            QueryKind::Mean => "MEAN",
        }
    }

    fn tag(self) -> u8 {
        match self {
            QueryKind::Count => 1,
            QueryKind::Sum => 2,
            QueryKind::Mean => 3,
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryKind {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "COUNT" => Ok(QueryKind::Count),
            "SUM" => Ok(QueryKind::Sum),
            "MEAN" => Ok(QueryKind::Mean),
            other => Err(QueryError::UnsupportedKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl Comparator {
    pub const ALL: [Comparator; 5] = [
        Comparator::Lt,
        Comparator::Le,
        Comparator::Eq,
        Comparator::Ge,
        Comparator::Gt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Eq => "=",
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Eq => lhs == rhs,
            Comparator::Ge => lhs >= rhs,
            Comparator::Gt => lhs > rhs,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Comparator::Lt => 1,
            Comparator::Le => 2,
            Comparator::Eq => 3,
            Comparator::Ge => 4,
            Comparator::Gt => 5,
        }
    }
}

impl FromStr for Comparator {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "<" => Ok(Comparator::Lt),
            "<=" | "≤" => Ok(Comparator::Le),
            "=" | "==" => Ok(Comparator::Eq),
            ">=" | "≥" => Ok(Comparator::Ge),
            ">" => Ok(Comparator::Gt),
            other => Err(QueryError::Parse(format!("unknown comparator {other:?}"))),
        }
    }
}

/// Single-column comparison filter, `column <op> value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    pub column: String,
    pub op: Comparator,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryDescriptor {
    pub kind: QueryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<Predicate>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("{0} requires a column")]
    MissingColumn(QueryKind),
    #[error("COUNT takes no column; use a predicate to filter rows")]
    UnexpectedColumn,
    #[error("unsupported query kind {0:?}")]
    UnsupportedKind(String),
    #[error("predicate constant must be finite")]
    NonFiniteConstant,
    #[error("public dataset size must be at least 1 for MEAN sensitivity")]
    EmptyPublicSize,
    #[error("cannot parse query: {0}")]
    Parse(String),
}

impl QueryDescriptor {
    pub fn count() -> Self {
        QueryDescriptor {
            kind: QueryKind::Count,
            column: None,
            predicate: None,
        }
    }

    pub fn sum(column: impl Into<String>) -> Self {
        QueryDescriptor {
            kind: QueryKind::Sum,
            column: Some(column.into()),
            predicate: None,
        }
    }

    pub fn mean(column: impl Into<String>) -> Self {
        QueryDescriptor {
            kind: QueryKind::Mean,
            column: Some(column.into()),
            predicate: None,
        }
    }

    pub fn filter(mut self, column: impl Into<String>, op: Comparator, value: f64) -> Self {
        self.predicate = Some(Predicate {
            column: column.into(),
            op,
            value,
        });
        self
    }

    /// Checks the descriptor's shape and that every referenced column exists.
    pub fn validate(&self, schema: &Schema) -> Result<(), QueryError> {
        match (self.kind, &self.column) {
            (QueryKind::Count, Some(_)) => return Err(QueryError::UnexpectedColumn),
            (QueryKind::Sum | QueryKind::Mean, None) => {
                return Err(QueryError::MissingColumn(self.kind))
            }
            (_, Some(c)) if schema.column(c).is_none() => {
                return Err(QueryError::UnknownColumn(c.clone()))
            }
            _ => {}
        }
        if let Some(p) = &self.predicate {
            if schema.column(&p.column).is_none() {
                return Err(QueryError::UnknownColumn(p.column.clone()));
            }
            if !p.value.is_finite() {
                return Err(QueryError::NonFiniteConstant);
            }
        }
        Ok(())
    }

    pub(crate) fn write_canonical(&self, w: &mut CanonicalWriter) {
        w.u8(self.kind.tag());
        w.opt_str(self.column.as_deref());
        match &self.predicate {
            None => {
                w.u8(0);
            }
            Some(p) => {
                // -0.0 and 0.0 select the same rows.
                let value = if p.value == 0.0 { 0.0 } else { p.value };
                w.u8(1).str(&p.column).u8(p.op.tag()).f64(value);
            }
        }
    }
}

/// Renders as `SUM(income) WHERE age >= 30`; [`FromStr`] accepts the same form.
impl fmt::Display for QueryDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}({})",
            self.kind.as_str(),
            self.column.as_deref().unwrap_or("*")
        )?;
        if let Some(p) = &self.predicate {
            write!(f, " WHERE {} {} {}", p.column, p.op.as_str(), p.value)?;
        }
        Ok(())
    }
}

impl FromStr for QueryDescriptor {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let open = s
            .find('(')
            .ok_or_else(|| QueryError::Parse(format!("missing '(' in {s:?}")))?;
        let close = s
            .find(')')
            .ok_or_else(|| QueryError::Parse(format!("missing ')' in {s:?}")))?;
        if close < open {
            return Err(QueryError::Parse(format!("malformed {s:?}")));
        }
        let kind: QueryKind = s[..open].parse()?;
        let arg = s[open + 1..close].trim();
        let column = match arg {
            "*" | "" => None,
            c => Some(parse_ident(c)?),
        };
        let rest = s[close + 1..].trim();
        let predicate = if rest.is_empty() {
            None
        } else {
            let body = rest
                .strip_prefix("WHERE")
                .or_else(|| rest.strip_prefix("where"))
                .ok_or_else(|| QueryError::Parse(format!("expected WHERE, got {rest:?}")))?
                .trim();
            Some(parse_predicate(body)?)
        };
        Ok(QueryDescriptor {
            kind,
            column,
            predicate,
        })
    }
}

fn parse_ident(s: &str) -> Result<String, QueryError> {
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        Ok(s.to_string())
    } else {
        Err(QueryError::Parse(format!("invalid column name {s:?}")))
    }
}

fn parse_predicate(body: &str) -> Result<Predicate, QueryError> {
    let pos = body
        .find(['<', '>', '='])
        .ok_or_else(|| QueryError::Parse(format!("missing comparator in {body:?}")))?;
    let column = parse_ident(body[..pos].trim())?;
    let tail = &body[pos..];
    let op_len = if tail.starts_with("<=") || tail.starts_with(">=") || tail.starts_with("==") {
        2
    } else {
        1
    };
    let op: Comparator = tail[..op_len].parse()?;
    let raw = tail[op_len..].trim();
    let value: f64 = raw
        .parse()
        .map_err(|_| QueryError::Parse(format!("invalid constant {raw:?}")))?;
    Ok(Predicate { column, op, value })
}

/// 32-byte digest identifying a query descriptor.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryKey(pub Hash256);

impl fmt::Debug for QueryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QueryKey({})", self.0)
    }
}

impl fmt::Display for QueryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl FromStr for QueryKey {
    type Err = HexDigestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(QueryKey)
    }
}

/// SHA-256 over the canonical encoding of kind, column and predicate.
pub fn canonical_key(desc: &QueryDescriptor) -> QueryKey {
    let mut w = CanonicalWriter::new("dpledger/query/v1");
    desc.write_canonical(&mut w);
    QueryKey(Hash256::of(&w.finish()))
}
