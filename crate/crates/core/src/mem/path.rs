use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::MemError;

/// Dot-separated address of a record in episode memory, e.g. `obs.Miami.temp_f`.
///
/// The first segment is a record-kind prefix and may not contain spaces; later
/// segments name entities (city names such as `San Francisco`) or fields.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MemPath(String);

impl MemPath {
    pub fn parse(raw: &str) -> Result<Self, MemError> {
        let bad = |why: &str| MemError::InvalidPath {
            path: raw.to_string(),
            reason: why.to_string(),
        };
        if raw.is_empty() {
            return Err(bad("empty path"));
        }
        for (i, seg) in raw.split('.').enumerate() {
            if seg.is_empty() {
                return Err(bad("empty segment"));
            }
            if seg.starts_with(' ') || seg.ends_with(' ') {
                return Err(bad("segment has leading or trailing space"));
            }
            if i == 0 && seg.contains(' ') {
                return Err(bad("prefix segment may not contain spaces"));
            }
            if !seg
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == ' ')
            {
                return Err(bad("segment has characters outside [A-Za-z0-9_ -]"));
            }
        }
        Ok(Self(raw.to_string()))
    }

    pub fn from_segments<S: AsRef<str>>(segments: &[S]) -> Result<Self, MemError> {
        let joined = segments.iter().map(|s| s.as_ref()).collect::<Vec<_>>().join(".");
        Self::parse(&joined)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('.')
    }

    pub fn prefix(&self) -> &str {
        self.0.split('.').next().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.segments().count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Path with everything after the prefix, e.g. `Miami` for `obs.Miami`.
    pub fn tail(&self) -> Option<&str> {
        self.0.split_once('.').map(|(_, rest)| rest)
    }

    pub fn child(&self, segment: &str) -> Result<Self, MemError> {
        Self::parse(&format!("{}.{}", self.0, segment))
    }

    pub fn starts_with(&self, other: &MemPath) -> bool {
        self.0 == other.0
            || (self.0.starts_with(&other.0) && self.0.as_bytes().get(other.0.len()) == Some(&b'.'))
    }
}

impl fmt::Display for MemPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for MemPath {
    type Err = MemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for MemPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for MemPath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        MemPath::parse(&raw).map_err(serde::de::Error::custom)
    }
}
