use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{Map, Value};

use super::{MemPath, MemRecord, RecordKind, Timestamp};

/// Compact view of episode memory handed to cognition each cycle.
///
/// Serializes with top-level keys goal, constraints, observations keyed by
/// entity, judgments, approved actions, pending actions and termination.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StateView {
    pub goal: Value,
    pub constraints: BTreeMap<String, Value>,
    pub observations: BTreeMap<String, ObservationEntry>,
    pub judgments: Vec<JudgmentEntry>,
    pub approved_actions: Vec<ActionEntry>,
    pub pending: Vec<PendingEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<NoteEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FailureEntry>,
    pub termination: TerminationView,
    /// Executed information-gathering calls; their results live in `observations`.
    #[serde(skip)]
    pub queries: Vec<ActionEntry>,
    #[serde(skip)]
    pub context_epoch: u32,
    #[serde(skip)]
    pub clock: Timestamp,
    #[serde(skip)]
    latest: BTreeMap<MemPath, (Value, Timestamp)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservationEntry {
    #[serde(flatten)]
    pub fields: Map<String, Value>,
    pub source: String,
    pub t: String,
    #[serde(skip)]
    pub timestamp: Timestamp,
    #[serde(skip)]
    pub epoch: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JudgmentEntry {
    pub t: String,
    pub proposition: String,
    pub evidence: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionEntry {
    pub t: String,
    pub name: String,
    pub args: Vec<Value>,
    pub status: String,
    #[serde(flatten)]
    pub result: Map<String, Value>,
    #[serde(skip)]
    pub path: Option<MemPath>,
    #[serde(skip)]
    pub epoch: u32,
    #[serde(skip)]
    pub cycle: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PendingEntry {
    pub t: String,
    pub name: String,
    pub args: Vec<Value>,
    #[serde(skip)]
    pub path: Option<MemPath>,
    /// Call whose successful execution releases this action.
    #[serde(skip)]
    pub after: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoteEntry {
    pub t: String,
    #[serde(flatten)]
    pub fields: Map<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FailureEntry {
    pub t: String,
    #[serde(flatten)]
    pub fields: Map<String, Value>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TerminationView {
    pub ready: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
}

fn as_map(value: &Value) -> Map<String, Value> {
    match value {
        Value::Object(m) => m.clone(),
        other => {
            let mut m = Map::new();
            m.insert("value".into(), other.clone());
            m
        }
    }
}

fn str_field(value: &Value, key: &str) -> String {
    value.get(key).and_then(Value::as_str).unwrap_or_default().to_string()
}

fn args_field(value: &Value) -> Vec<Value> {
    value.get("args").and_then(Value::as_array).cloned().unwrap_or_default()
}

impl StateView {
    /// Builds the view from `(first write, latest record)` pairs per path.
    pub(crate) fn build<'a, I>(entries: I, clock: Timestamp) -> Self
    where
        I: IntoIterator<Item = (Timestamp, &'a MemRecord)>,
    {
        let mut ordered: Vec<(Timestamp, &MemRecord)> = entries.into_iter().collect();
        ordered.sort_by_key(|(first, rec)| (*first, rec.path.clone()));

        let mut view = StateView {
            clock,
            ..Default::default()
        };
        for (_, rec) in ordered {
            view.latest
                .insert(rec.path.clone(), (rec.value.clone(), rec.timestamp));
            let t = rec.timestamp.to_string();
            let tail = rec.path.tail().unwrap_or_default().to_string();
            match rec.kind {
                RecordKind::Goal => view.goal = rec.value.clone(),
                RecordKind::Constraint => {
                    view.constraints.insert(tail, rec.value.clone());
                }
                RecordKind::Observation => {
                    view.observations.insert(
                        tail,
                        ObservationEntry {
                            fields: as_map(&rec.value),
                            source: rec.source.clone(),
                            t,
                            timestamp: rec.timestamp,
                            epoch: rec.epoch,
                        },
                    );
                }
                RecordKind::Judgment => view.judgments.push(JudgmentEntry {
                    t,
                    proposition: str_field(&rec.value, "proposition"),
                    evidence: rec
                        .value
                        .get("evidence")
                        .and_then(Value::as_array)
                        .map(|a| a.iter().filter_map(|e| e.as_str().map(str::to_string)).collect())
                        .unwrap_or_default(),
                }),
                RecordKind::ApprovedAction => {
                    let entry = ActionEntry {
                        t,
                        name: str_field(&rec.value, "name"),
                        args: args_field(&rec.value),
                        status: str_field(&rec.value, "status"),
                        result: rec.value.get("result").map(as_map).unwrap_or_default(),
                        path: Some(rec.path.clone()),
                        epoch: rec.epoch,
                        cycle: rec.timestamp.cycle,
                    };
                    if rec.value.get("effect").and_then(Value::as_str) == Some("query") {
                        view.queries.push(entry);
                    } else {
                        view.approved_actions.push(entry);
                    }
                }
                RecordKind::PendingAction => {
                    if rec.value.get("status").and_then(Value::as_str) == Some("pending") {
                        view.pending.push(PendingEntry {
                            t,
                            name: str_field(&rec.value, "name"),
                            args: args_field(&rec.value),
                            path: Some(rec.path.clone()),
                            after: rec.value.get("after").cloned(),
                        });
                    }
                }
                RecordKind::Note => {
                    if let Some(epoch) = rec.value.get("context_epoch").and_then(Value::as_u64) {
                        view.context_epoch = view.context_epoch.max(epoch as u32);
                    }
                    view.notes.push(NoteEntry {
                        t,
                        fields: as_map(&rec.value),
                    });
                }
                RecordKind::FailureEvent => view.failures.push(FailureEntry {
                    t,
                    fields: as_map(&rec.value),
                }),
                RecordKind::Termination => {
                    view.termination = TerminationView {
                        ready: rec.value.get("ready").and_then(Value::as_bool).unwrap_or(false),
                        guard: rec
                            .value
                            .get("guard")
                            .and_then(Value::as_str)
                            .filter(|g| *g != "none")
                            .map(str::to_string),
                    };
                }
            }
        }
        view
    }

    /// Resolves a dotted path against the latest records, descending into
    /// record values for trailing field segments (`obs.Miami.temp_f`).
    pub fn lookup(&self, path: &MemPath) -> Option<(Value, Timestamp)> {
        let segs: Vec<&str> = path.segments().collect();
        for split in (1..=segs.len()).rev() {
            let Ok(head) = MemPath::from_segments(&segs[..split]) else {
                continue;
            };
            if let Some((value, ts)) = self.latest.get(&head) {
                let mut cur = value;
                for seg in &segs[split..] {
                    cur = match cur {
                        Value::Object(m) => m.get(*seg)?,
                        Value::Array(a) => a.get(seg.parse::<usize>().ok()?)?,
                        _ => return None,
                    };
                }
                return Some((cur.clone(), *ts));
            }
        }
        None
    }

    pub fn has_path(&self, path: &MemPath) -> bool {
        self.lookup(path).is_some()
    }

    pub fn observation(&self, key: &str) -> Option<&ObservationEntry> {
        self.observations.get(key)
    }

    /// Observation written in the current context epoch, if any.
    pub fn fresh_observation(&self, key: &str) -> Option<&ObservationEntry> {
        self.observations
            .get(key)
            .filter(|o| o.epoch == self.context_epoch)
    }

    /// Executed calls of any effect class, in execution order.
    pub fn executed_calls(&self) -> impl Iterator<Item = &ActionEntry> {
        let mut all: Vec<&ActionEntry> = self.queries.iter().chain(&self.approved_actions).collect();
        all.sort_by_key(|a| {
            a.path
                .as_ref()
                .and_then(|p| p.tail())
                .and_then(|t| t.parse::<u64>().ok())
                .unwrap_or(u64::MAX)
        });
        all.into_iter()
    }
}
