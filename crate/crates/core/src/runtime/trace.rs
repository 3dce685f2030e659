use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::canonical::{canonical_bytes, canonical_string, sha256_hex, GENESIS_HASH};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Retrieve,
    Propose,
    Decide,
    Act,
    MemWrite,
    Snapshot,
    Terminate,
}

/// One hash-chained log entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub episode_id: String,
    pub seq: u64,
    pub cycle: u32,
    pub phase: Phase,
    pub payload: Value,
    pub prev_hash: String,
    pub hash: String,
}

impl TraceEvent {
    pub fn compute_hash(&self) -> String {
        let body = json!({
            "episode_id": self.episode_id,
            "seq": self.seq,
            "cycle": self.cycle,
            "phase": self.phase,
            "payload": self.payload,
        });
        let mut bytes = self.prev_hash.as_bytes().to_vec();
        bytes.extend(canonical_bytes(&body));
        sha256_hex(&bytes)
    }
}

#[derive(Debug, Error)]
pub enum TamperError {
    #[error("event {index}: {reason}")]
    Invalid { index: usize, reason: String },
    #[error("trace is empty")]
    Empty,
    #[error("trace i/o: {0}")]
    Io(#[from] io::Error),
}

impl TamperError {
    /// Index of the first event that failed verification.
    pub fn index(&self) -> Option<usize> {
        match self {
            TamperError::Invalid { index, .. } => Some(*index),
            _ => None,
        }
    }
}

fn invalid(index: usize, reason: impl Into<String>) -> TamperError {
    TamperError::Invalid {
        index,
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, episode_id: &str, cycle: u32, phase: Phase, payload: Value) -> &TraceEvent {
        let prev_hash = self
            .events
            .last()
            .map(|e| e.hash.clone())
            .unwrap_or_else(|| GENESIS_HASH.to_string());
        let mut ev = TraceEvent {
            episode_id: episode_id.to_string(),
            seq: self.events.len() as u64,
            cycle,
            phase,
            payload,
            prev_hash,
            hash: String::new(),
        };
        ev.hash = ev.compute_hash();
        self.events.push(ev);
        self.events.last().expect("just pushed")
    }

    pub fn last_hash(&self) -> &str {
        self.events.last().map(|e| e.hash.as_str()).unwrap_or(GENESIS_HASH)
    }

    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&canonical_string(e));
            out.push('\n');
        }
        out
    }

    /// Parses and verifies a serialized trace.
    pub fn from_lines(text: &str) -> Result<Self, TamperError> {
        Self::from_bytes(text.as_bytes())
    }

    /// Like [`Trace::from_lines`], reporting invalid UTF-8 at the event it hits.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TamperError> {
        let mut events = Vec::new();
        let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
        for (index, raw) in body.split(|b| *b == b'\n').enumerate() {
            let line = std::str::from_utf8(raw).map_err(|_| invalid(index, "invalid UTF-8"))?;
            let ev: TraceEvent = serde_json::from_str(line).map_err(|e| invalid(index, format!("unparseable: {e}")))?;
            if canonical_string(&ev) != line {
                return Err(invalid(index, "not in canonical form"));
            }
            events.push(ev);
        }
        let trace = Trace { events };
        trace.verify()?;
        Ok(trace)
    }

    /// Checks sequence numbers, the hash chain and every event hash.
    pub fn verify(&self) -> Result<(), TamperError> {
        let first = self.events.first().ok_or(TamperError::Empty)?;
        let mut prev = GENESIS_HASH.to_string();
        for (index, ev) in self.events.iter().enumerate() {
            if ev.seq != index as u64 {
                return Err(invalid(index, format!("sequence {} out of order", ev.seq)));
            }
            if ev.episode_id != first.episode_id {
                return Err(invalid(index, "episode id changed mid-trace"));
            }
            if ev.prev_hash != prev {
                return Err(invalid(index, "broken hash chain"));
            }
            if ev.compute_hash() != ev.hash {
                return Err(invalid(index, "hash mismatch"));
            }
            prev = ev.hash.clone();
        }
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> io::Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_lines())
    }

    pub fn read_file(path: &Path) -> Result<Self, TamperError> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn episode_id(&self) -> Option<&str> {
        self.events.first().map(|e| e.episode_id.as_str())
    }

    pub fn of_phase(&self, phase: Phase) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.phase == phase)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        let mut t = Trace::new();
        t.push("e", 0, Phase::Init, json!({"a": 1}));
        t.push("e", 1, Phase::Retrieve, json!({"b": [1, 2]}));
        t.push("e", 1, Phase::Terminate, json!({"ok": true}));
        t
    }

    #[test]
    fn chain_starts_at_genesis_and_links() {
        let t = sample();
        assert_eq!(t.events[0].prev_hash, GENESIS_HASH);
        assert_eq!(t.events[1].prev_hash, t.events[0].hash);
        t.verify().unwrap();
    }

    #[test]
    fn lines_roundtrip() {
        let t = sample();
        assert_eq!(Trace::from_lines(&t.to_lines()).unwrap(), t);
    }

    #[test]
    fn edited_payload_fails_at_that_event() {
        let t = sample();
        let text = t.to_lines().replacen("[1,2]", "[1,3]", 1);
        let err = Trace::from_lines(&text).unwrap_err();
        assert_eq!(err.index(), Some(1));
    }

    #[test]
    fn hash_matches_independent_recomputation() {
        let t = sample();
        let ev = &t.events[0];
        let body = r#"{"cycle":0,"episode_id":"e","payload":{"a":1},"phase":"init","seq":0}"#;
        let expected = sha256_hex(format!("{GENESIS_HASH}{body}").as_bytes());
        assert_eq!(ev.hash, expected);
    }
}
