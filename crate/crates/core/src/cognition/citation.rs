use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::mem::{MemPath, StateView};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Comparator {
    Ge,
    Gt,
    Le,
    Lt,
    Eq,
    Exists,
}

impl Comparator {
    fn token(self) -> &'static str {
        match self {
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
            Comparator::Le => "<=",
            Comparator::Lt => "<",
            Comparator::Eq => "==",
            Comparator::Exists => " exists",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("cannot parse citation {raw:?}: {reason}")]
pub struct CitationError {
    pub raw: String,
    pub reason: String,
}

/// An evidence assertion `path comparator literal` (or `path exists`) that
/// the controller can check against memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Citation {
    pub path: MemPath,
    pub op: Comparator,
    pub literal: Value,
}

impl Citation {
    pub fn new(path: MemPath, op: Comparator, literal: Value) -> Self {
        Self { path, op, literal }
    }

    pub fn exists(path: MemPath) -> Self {
        Self::new(path, Comparator::Exists, Value::Null)
    }

    pub fn parse(raw: &str) -> Result<Self, CitationError> {
        let err = |reason: &str| CitationError {
            raw: raw.to_string(),
            reason: reason.to_string(),
        };
        let text = raw.trim();
        if let Some(path) = text.strip_suffix(" exists") {
            let path = MemPath::parse(path.trim()).map_err(|e| err(&e.to_string()))?;
            return Ok(Self::exists(path));
        }
        let at = text
            .find(['<', '>', '='])
            .ok_or_else(|| err("no comparator"))?;
        let rest = &text[at..];
        let (op, width) = match (rest.as_bytes()[0], rest.as_bytes().get(1)) {
            (b'>', Some(b'=')) => (Comparator::Ge, 2),
            (b'<', Some(b'=')) => (Comparator::Le, 2),
            (b'=', Some(b'=')) => (Comparator::Eq, 2),
            (b'>', _) => (Comparator::Gt, 1),
            (b'<', _) => (Comparator::Lt, 1),
            (b'=', _) => (Comparator::Eq, 1),
            _ => return Err(err("no comparator")),
        };
        let path = MemPath::parse(text[..at].trim()).map_err(|e| err(&e.to_string()))?;
        let literal = parse_literal(rest[width..].trim()).ok_or_else(|| err("missing literal"))?;
        if matches!(op, Comparator::Ge | Comparator::Gt | Comparator::Le | Comparator::Lt)
            && !literal.is_number()
        {
            return Err(err("ordering comparators need a numeric literal"));
        }
        Ok(Self { path, op, literal })
    }

    /// Evaluates against the latest records in `state`; absent paths are false.
    pub fn holds(&self, state: &StateView) -> bool {
        self.evaluate(state).0
    }

    /// Truth value together with the value observed at the cited path.
    pub fn evaluate(&self, state: &StateView) -> (bool, Option<Value>) {
        let observed = state.lookup(&self.path).map(|(v, _)| v);
        let holds = match (&observed, self.op) {
            (None, _) => false,
            (Some(_), Comparator::Exists) => true,
            (Some(v), Comparator::Eq) => values_equal(v, &self.literal),
            (Some(v), op) => match (v.as_f64(), self.literal.as_f64()) {
                (Some(a), Some(b)) => match (v.as_i64(), self.literal.as_i64()) {
                    (Some(a), Some(b)) => compare(op, a.cmp(&b)),
                    _ => a.partial_cmp(&b).is_some_and(|o| compare(op, o)),
                },
                _ => false,
            },
        };
        (holds, observed)
    }
}

fn compare(op: Comparator, ord: std::cmp::Ordering) -> bool {
    use std::cmp::Ordering::*;
    match op {
        Comparator::Ge => ord != Less,
        Comparator::Gt => ord == Greater,
        Comparator::Le => ord != Greater,
        Comparator::Lt => ord == Less,
        Comparator::Eq => ord == Equal,
        Comparator::Exists => true,
    }
}

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a.as_i64(), b.as_i64()) {
        (Some(x), Some(y)) => x == y,
        _ => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => x == y,
            _ => a == b,
        },
    }
}

fn parse_literal(raw: &str) -> Option<Value> {
    if raw.is_empty() {
        return None;
    }
    if let Ok(i) = raw.parse::<i64>() {
        return Some(Value::from(i));
    }
    if let Ok(f) = raw.parse::<f64>() {
        return Some(Value::from(f));
    }
    match raw {
        "true" => return Some(Value::Bool(true)),
        "false" => return Some(Value::Bool(false)),
        _ => {}
    }
    if raw.len() >= 2 && raw.starts_with('"') && raw.ends_with('"') {
        return serde_json::from_str(raw).ok();
    }
    Some(Value::String(raw.to_string()))
}

impl fmt::Display for Citation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.op {
            Comparator::Exists => write!(f, "{}{}", self.path, self.op.token()),
            op => {
                let lit = match &self.literal {
                    Value::String(s) if parse_literal(s) == Some(Value::String(s.clone())) => s.clone(),
                    other => other.to_string(),
                };
                write!(f, "{}{}{}", self.path, op.token(), lit)
            }
        }
    }
}

impl FromStr for Citation {
    type Err = CitationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for Citation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Citation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Citation::parse(&raw).map_err(serde::de::Error::custom)
    }
}
