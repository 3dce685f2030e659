use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{MemError, MemPath};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Observation,
    Judgment,
    ApprovedAction,
    PendingAction,
    FailureEvent,
    Note,
    Goal,
    Constraint,
    Termination,
}

impl RecordKind {
    pub const ALL: [RecordKind; 9] = [
        RecordKind::Observation,
        RecordKind::Judgment,
        RecordKind::ApprovedAction,
        RecordKind::PendingAction,
        RecordKind::FailureEvent,
        RecordKind::Note,
        RecordKind::Goal,
        RecordKind::Constraint,
        RecordKind::Termination,
    ];

    /// Path prefix every record of this kind lives under.
    pub fn prefix(self) -> &'static str {
        match self {
            RecordKind::Observation => "obs",
            RecordKind::Judgment => "judgments",
            RecordKind::ApprovedAction => "actions",
            RecordKind::PendingAction => "pending",
            RecordKind::FailureEvent => "failures",
            RecordKind::Note => "notes",
            RecordKind::Goal => "goal",
            RecordKind::Constraint => "constraints",
            RecordKind::Termination => "termination",
        }
    }

    pub fn for_prefix(prefix: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.prefix() == prefix)
    }

    /// Kinds stored at exactly their prefix (a single slot), not below it.
    fn is_singleton(self) -> bool {
        matches!(self, RecordKind::Goal | RecordKind::Termination)
    }
}

/// Position on an episode's logical clock: loop cycle, then write order within it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub cycle: u32,
    pub seq: u32,
}

impl Timestamp {
    pub fn new(cycle: u32, seq: u32) -> Self {
        Self { cycle, seq }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}.{}", self.cycle, self.seq)
    }
}

/// One typed, time-stamped fact in episode memory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemRecord {
    pub path: MemPath,
    pub kind: RecordKind,
    pub value: Value,
    pub source: String,
    pub timestamp: Timestamp,
    /// Context epoch in force when the record was written.
    #[serde(default)]
    pub epoch: u32,
}

impl MemRecord {
    pub fn new(
        path: MemPath,
        kind: RecordKind,
        value: Value,
        source: impl Into<String>,
        timestamp: Timestamp,
        epoch: u32,
    ) -> Self {
        Self {
            path,
            kind,
            value,
            source: source.into(),
            timestamp,
            epoch,
        }
    }

    pub fn validate(&self) -> Result<(), MemError> {
        let expected = RecordKind::for_prefix(self.path.prefix());
        if expected != Some(self.kind) {
            return Err(MemError::KindMismatch {
                path: self.path.to_string(),
                kind: self.kind,
            });
        }
        if self.kind.is_singleton() != (self.path.len() == 1) {
            return Err(MemError::KindMismatch {
                path: self.path.to_string(),
                kind: self.kind,
            });
        }
        if self.kind == RecordKind::Observation {
            if let Some(temp) = self.value.get("temp_f") {
                if !temp.is_i64() {
                    return Err(MemError::InvalidValue {
                        path: self.path.to_string(),
                        reason: "temp_f must be an integer in degrees Fahrenheit".into(),
                    });
                }
            }
        }
        Ok(())
    }
}
