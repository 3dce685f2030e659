use serde::{Deserialize, Serialize};

use super::{Phase, TamperError, Trace};
use crate::mem::{EpisodeStore, MemRecord, MemoryMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub episode_id: String,
    /// Hash of the memory rebuilt from the trace's write events.
    pub replayed_hash: String,
    /// Hash recorded by the last snapshot event.
    pub recorded_hash: String,
    pub writes: usize,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.replayed_hash == self.recorded_hash
    }
}

/// Rebuilds episode memory from a verified trace by folding its write events.
pub fn replay(trace: &Trace) -> Result<ReplayReport, TamperError> {
    trace.verify()?;
    let init = &trace.events[0];
    if init.phase != Phase::Init {
        return Err(TamperError::Invalid {
            index: 0,
            reason: "trace does not start with init".into(),
        });
    }
    let mode: MemoryMode = serde_json::from_value(init.payload["memory"].clone()).map_err(|e| TamperError::Invalid {
        index: 0,
        reason: format!("memory mode: {e}"),
    })?;
    let mut store = EpisodeStore::new(init.episode_id.clone(), mode);
    let mut writes = 0;
    let mut recorded = None;
    let mut last_cycle = 0;
    for (index, ev) in trace.events.iter().enumerate() {
        match ev.phase {
            Phase::MemWrite => {
                let rec: MemRecord = serde_json::from_value(ev.payload.clone()).map_err(|e| TamperError::Invalid {
                    index,
                    reason: format!("write payload: {e}"),
                })?;
                store.write(rec).map_err(|e| TamperError::Invalid {
                    index,
                    reason: e.to_string(),
                })?;
                writes += 1;
            }
            Phase::Snapshot => {
                recorded = ev.payload["content_hash"].as_str().map(str::to_string);
                last_cycle = ev.cycle;
            }
            _ => {}
        }
    }
    let recorded_hash = recorded.ok_or_else(|| TamperError::Invalid {
        index: trace.events.len() - 1,
        reason: "no snapshot event".into(),
    })?;
    Ok(ReplayReport {
        episode_id: init.episode_id.clone(),
        replayed_hash: store.snapshot(last_cycle).content_hash,
        recorded_hash,
        writes,
    })
}
