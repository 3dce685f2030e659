use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{MemError, MemPath, MemRecord, MemSnapshot, RecordKind, StateView, Timestamp};

pub const DEFAULT_WINDOW_SIZE: usize = 2;

/// How episode memory retains observations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MemoryMode {
    /// Every write is kept; superseded records stay retrievable by timestamp.
    #[default]
    Full,
    /// Degraded store: one slot per observation path, at most `size`
    /// observation paths; a rewrite overwrites its slot and the least recently
    /// written path is evicted when the window is full.
    Window { size: usize },
}

/// Memory of a single episode. One loop owns it at a time.
#[derive(Clone, Debug)]
pub struct EpisodeStore {
    episode_id: String,
    mode: MemoryMode,
    history: BTreeMap<MemPath, Vec<MemRecord>>,
    first_write: BTreeMap<MemPath, Timestamp>,
    kind_index: BTreeMap<RecordKind, BTreeSet<MemPath>>,
    obs_window: VecDeque<MemPath>,
    latest: Option<Timestamp>,
    journal: Vec<MemRecord>,
}

impl EpisodeStore {
    pub fn new(episode_id: impl Into<String>, mode: MemoryMode) -> Self {
        Self {
            episode_id: episode_id.into(),
            mode,
            history: BTreeMap::new(),
            first_write: BTreeMap::new(),
            kind_index: BTreeMap::new(),
            obs_window: VecDeque::new(),
            latest: None,
            journal: Vec::new(),
        }
    }

    pub fn episode_id(&self) -> &str {
        &self.episode_id
    }

    pub fn mode(&self) -> MemoryMode {
        self.mode
    }

    /// Next free timestamp in `cycle`.
    pub fn tick(&self, cycle: u32) -> Timestamp {
        match self.latest {
            Some(ts) if ts.cycle == cycle => Timestamp::new(cycle, ts.seq + 1),
            Some(ts) if ts.cycle > cycle => Timestamp::new(ts.cycle, ts.seq + 1),
            _ => Timestamp::new(cycle, 0),
        }
    }

    pub fn latest_timestamp(&self) -> Option<Timestamp> {
        self.latest
    }

    /// Next unused indexed path under a kind's prefix, e.g. `judgments.3`.
    pub fn next_slot(&self, kind: RecordKind) -> MemPath {
        let used = self
            .kind_index
            .get(&kind)
            .map(|paths| {
                paths
                    .iter()
                    .filter_map(|p| p.tail().and_then(|t| t.parse::<usize>().ok()))
                    .map(|n| n + 1)
                    .max()
                    .unwrap_or(0)
            })
            .unwrap_or(0);
        MemPath::from_segments(&[kind.prefix().to_string(), used.to_string()])
            .expect("indexed slot paths are well formed")
    }

    pub fn write(&mut self, record: MemRecord) -> Result<MemPath, MemError> {
        record.validate()?;
        if let Some(latest) = self.latest {
            if record.timestamp <= latest {
                return Err(MemError::NonMonotonic {
                    episode: self.episode_id.clone(),
                    attempted: record.timestamp,
                    latest,
                });
            }
        }
        let path = record.path.clone();
        self.latest = Some(record.timestamp);
        self.journal.push(record.clone());

        match (self.mode, record.kind) {
            (MemoryMode::Window { size }, RecordKind::Observation) => {
                self.obs_window.retain(|p| p != &path);
                self.obs_window.push_back(path.clone());
                self.history.insert(path.clone(), vec![record.clone()]);
                self.first_write.insert(path.clone(), record.timestamp);
                while self.obs_window.len() > size {
                    if let Some(evicted) = self.obs_window.pop_front() {
                        self.history.remove(&evicted);
                        self.first_write.remove(&evicted);
                        if let Some(set) = self.kind_index.get_mut(&RecordKind::Observation) {
                            set.remove(&evicted);
                        }
                    }
                }
            }
            _ => {
                self.first_write.entry(path.clone()).or_insert(record.timestamp);
                self.history.entry(path.clone()).or_default().push(record.clone());
            }
        }
        if self.history.contains_key(&path) {
            self.kind_index.entry(record.kind).or_default().insert(path.clone());
        }
        Ok(path)
    }

    pub fn read(&self, path: &MemPath) -> Option<&MemRecord> {
        self.history.get(path).and_then(|h| h.last())
    }

    /// All retained records at `path`, oldest first.
    pub fn history(&self, path: &MemPath) -> &[MemRecord] {
        self.history.get(path).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn read_at(&self, path: &MemPath, at: Timestamp) -> Option<&MemRecord> {
        self.history(path).iter().rev().find(|r| r.timestamp <= at)
    }

    pub fn paths_of_kind(&self, kind: RecordKind) -> impl Iterator<Item = &MemPath> {
        self.kind_index.get(&kind).into_iter().flatten()
    }

    pub fn paths_under<'a>(&'a self, prefix: &'a MemPath) -> impl Iterator<Item = &'a MemPath> {
        self.history
            .range(prefix.clone()..)
            .map(|(p, _)| p)
            .take_while(move |p| p.as_str().starts_with(prefix.as_str()))
            .filter(move |p| p.starts_with(prefix))
    }

    /// Records in canonical order: sorted by path, then timestamp.
    pub fn records(&self) -> impl Iterator<Item = &MemRecord> {
        self.history.values().flatten()
    }

    pub fn record_count(&self) -> usize {
        self.history.values().map(Vec::len).sum()
    }

    pub fn retrieve_state(&self) -> StateView {
        let clock = self.latest.unwrap_or_default();
        StateView::build(
            self.history.iter().filter_map(|(path, h)| {
                let first = *self.first_write.get(path)?;
                h.last().map(|r| (first, r))
            }),
            clock,
        )
    }

    pub fn snapshot(&self, cycle: u32) -> MemSnapshot {
        MemSnapshot::new(&self.episode_id, cycle, self.records().cloned().collect())
    }

    pub fn is_terminated(&self) -> bool {
        self.read(&MemPath::parse("termination").expect("static path"))
            .and_then(|r| r.value.get("ready"))
            .and_then(Value::as_bool)
            .unwrap_or(false)
    }

    /// Write events not yet forwarded to the trace, oldest first.
    pub fn drain_journal(&mut self) -> Vec<MemRecord> {
        std::mem::take(&mut self.journal)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode_id: String,
    pub goal: Value,
    pub outcome: Value,
    pub confirmations: Vec<String>,
    pub final_hash: String,
}

#[derive(Clone, Debug)]
pub struct ArchivedEpisode {
    pub snapshot: MemSnapshot,
    pub summary: EpisodeSummary,
}

/// Reusable knowledge outliving episodes. Preferences are seed data only.
#[derive(Clone, Debug, Default)]
pub struct LongTermMemory {
    pub tool_schemas: BTreeMap<String, Value>,
    pub summaries: BTreeMap<String, EpisodeSummary>,
    pub preferences: BTreeMap<String, Value>,
}

/// The memory service: active episode stores, long-term memory and archive.
#[derive(Clone, Debug, Default)]
pub struct MemStore {
    active: BTreeMap<String, EpisodeStore>,
    archived: BTreeMap<String, ArchivedEpisode>,
    pub long_term: LongTermMemory,
}

impl MemStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open_episode(&mut self, episode_id: &str, mode: MemoryMode) -> Result<&mut EpisodeStore, MemError> {
        if self.active.contains_key(episode_id) || self.archived.contains_key(episode_id) {
            return Err(MemError::EpisodeExists(episode_id.to_string()));
        }
        Ok(self
            .active
            .entry(episode_id.to_string())
            .or_insert_with(|| EpisodeStore::new(episode_id, mode)))
    }

    /// Adopts a store produced elsewhere (e.g. by a parallel runner).
    pub fn insert_episode(&mut self, store: EpisodeStore) -> Result<(), MemError> {
        let id = store.episode_id().to_string();
        if self.active.contains_key(&id) || self.archived.contains_key(&id) {
            return Err(MemError::EpisodeExists(id));
        }
        self.active.insert(id, store);
        Ok(())
    }

    pub fn episode(&self, episode_id: &str) -> Result<&EpisodeStore, MemError> {
        self.active
            .get(episode_id)
            .ok_or_else(|| MemError::UnknownEpisode(episode_id.to_string()))
    }

    pub fn episode_mut(&mut self, episode_id: &str) -> Result<&mut EpisodeStore, MemError> {
        self.active
            .get_mut(episode_id)
            .ok_or_else(|| MemError::UnknownEpisode(episode_id.to_string()))
    }

    pub fn active_episodes(&self) -> impl Iterator<Item = &str> {
        self.active.keys().map(String::as_str)
    }

    pub fn write(&mut self, episode_id: &str, record: MemRecord) -> Result<MemPath, MemError> {
        self.episode_mut(episode_id)?.write(record)
    }

    pub fn read(&self, episode_id: &str, path: &MemPath) -> Option<&MemRecord> {
        self.active.get(episode_id).and_then(|e| e.read(path))
    }

    pub fn retrieve_state(&self, episode_id: &str) -> Result<StateView, MemError> {
        Ok(self.episode(episode_id)?.retrieve_state())
    }

    pub fn snapshot(&self, episode_id: &str) -> Result<MemSnapshot, MemError> {
        let store = self.episode(episode_id)?;
        let cycle = store.latest_timestamp().map(|t| t.cycle).unwrap_or(0);
        Ok(store.snapshot(cycle))
    }

    /// Moves a terminated episode to the archive and records its summary in
    /// long-term memory.
    pub fn archive(&mut self, episode_id: &str) -> Result<EpisodeSummary, MemError> {
        if self.archived.contains_key(episode_id) {
            return Err(MemError::AlreadyArchived(episode_id.to_string()));
        }
        let store = self.episode(episode_id)?;
        if !store.is_terminated() {
            return Err(MemError::NotTerminated(episode_id.to_string()));
        }
        let snapshot = self.snapshot(episode_id)?;
        let state = store.retrieve_state();
        let confirmations = state
            .approved_actions
            .iter()
            .filter(|a| a.status == "executed")
            .filter_map(|a| a.result.get("confirmation").and_then(Value::as_str))
            .map(str::to_string)
            .collect();
        let outcome = serde_json::json!({
            "guard": state.termination.guard,
            "actions": state
                .approved_actions
                .iter()
                .filter(|a| a.status == "executed")
                .map(|a| serde_json::json!({"name": a.name, "args": a.args}))
                .collect::<Vec<_>>(),
        });
        let summary = EpisodeSummary {
            episode_id: episode_id.to_string(),
            goal: state.goal.clone(),
            outcome,
            confirmations,
            final_hash: snapshot.content_hash.clone(),
        };
        self.active.remove(episode_id);
        self.long_term
            .summaries
            .insert(episode_id.to_string(), summary.clone());
        self.archived.insert(
            episode_id.to_string(),
            ArchivedEpisode {
                snapshot,
                summary: summary.clone(),
            },
        );
        Ok(summary)
    }

    pub fn archived(&self, episode_id: &str) -> Option<&ArchivedEpisode> {
        self.archived.get(episode_id)
    }

    pub fn archived_episodes(&self) -> impl Iterator<Item = &ArchivedEpisode> {
        self.archived.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn obs(city: &str, temp: i64, ts: Timestamp) -> MemRecord {
        MemRecord::new(
            MemPath::from_segments(&["obs", city]).unwrap(),
            RecordKind::Observation,
            json!({"temp_f": temp}),
            "get_weather",
            ts,
            0,
        )
    }

    fn p(s: &str) -> MemPath {
        MemPath::parse(s).unwrap()
    }

    #[test]
    fn write_then_read_latest() {
        let mut s = EpisodeStore::new("e", MemoryMode::Full);
        assert!(s.read(&p("obs.Miami")).is_none());
        assert_eq!(s.write(obs("Miami", 82, Timestamp::new(1, 0))).unwrap(), p("obs.Miami"));
        assert_eq!(s.read(&p("obs.Miami")).unwrap().value["temp_f"], 82);
        s.write(obs("Miami", 80, Timestamp::new(2, 0))).unwrap();
        assert_eq!(s.read(&p("obs.Miami")).unwrap().value["temp_f"], 80);
        assert_eq!(s.history(&p("obs.Miami")).len(), 2);
        assert_eq!(
            s.read_at(&p("obs.Miami"), Timestamp::new(1, 5)).unwrap().value["temp_f"],
            82
        );
    }

    #[test]
    fn rejects_non_monotonic_timestamp() {
        let mut s = EpisodeStore::new("e", MemoryMode::Full);
        s.write(obs("Miami", 82, Timestamp::new(1, 1))).unwrap();
        let err = s.write(obs("Miami", 82, Timestamp::new(1, 1))).unwrap_err();
        assert!(matches!(err, MemError::NonMonotonic { .. }));
        assert!(s.write(obs("Miami", 82, Timestamp::new(1, 0))).is_err());
    }

    #[test]
    fn window_mode_overwrites_and_evicts() {
        let mut s = EpisodeStore::new("e", MemoryMode::Window { size: 2 });
        s.write(obs("San Francisco", 68, Timestamp::new(1, 0))).unwrap();
        s.write(obs("Miami", 82, Timestamp::new(1, 1))).unwrap();
        s.write(obs("Miami", 83, Timestamp::new(1, 2))).unwrap();
        assert_eq!(s.history(&p("obs.Miami")).len(), 1);
        assert!(s.read(&p("obs.San Francisco")).is_some());
        s.write(obs("New York", 70, Timestamp::new(2, 0))).unwrap();
        assert!(s.read(&p("obs.San Francisco")).is_none());
        assert_eq!(s.retrieve_state().observations.len(), 2);
    }

    #[test]
    fn unknown_episode_errors_but_read_is_absent() {
        let mut m = MemStore::new();
        assert!(m.read("nope", &p("obs.Miami")).is_none());
        assert!(matches!(m.retrieve_state("nope"), Err(MemError::UnknownEpisode(_))));
        assert!(m.snapshot("nope").is_err());
        m.open_episode("e1", MemoryMode::Full).unwrap();
        assert!(m.open_episode("e1", MemoryMode::Full).is_err());
    }

    #[test]
    fn archive_requires_termination_and_is_once_only() {
        let mut m = MemStore::new();
        m.open_episode("e1", MemoryMode::Full).unwrap();
        m.write("e1", obs("Miami", 82, Timestamp::new(1, 0))).unwrap();
        assert!(matches!(m.archive("e1"), Err(MemError::NotTerminated(_))));
        m.write(
            "e1",
            MemRecord::new(p("termination"), RecordKind::Termination, json!({"ready": true, "guard": "goal_satisfied"}), "control", Timestamp::new(2, 0), 0),
        )
        .unwrap();
        let summary = m.archive("e1").unwrap();
        assert_eq!(m.active_episodes().count(), 0);
        assert!(m.long_term.summaries.contains_key("e1"));
        assert_eq!(summary.final_hash, m.archived("e1").unwrap().snapshot.content_hash);
        assert!(matches!(m.archive("e1"), Err(MemError::AlreadyArchived(_))));
    }

    #[test]
    fn slots_and_prefix_index() {
        let mut s = EpisodeStore::new("e", MemoryMode::Full);
        assert_eq!(s.next_slot(RecordKind::Judgment), p("judgments.0"));
        s.write(MemRecord::new(p("judgments.0"), RecordKind::Judgment, json!({}), "c", Timestamp::new(1, 0), 0)).unwrap();
        assert_eq!(s.next_slot(RecordKind::Judgment), p("judgments.1"));
        s.write(obs("Miami", 82, Timestamp::new(1, 1))).unwrap();
        s.write(obs("Mia", 82, Timestamp::new(1, 2))).unwrap();
        let under: Vec<_> = s.paths_under(&p("obs.Miami")).cloned().collect();
        assert_eq!(under, vec![p("obs.Miami")]);
        assert_eq!(s.paths_of_kind(RecordKind::Observation).count(), 2);
    }

    proptest! {
        // Latest-wins view over k writes while history exposes all k.
        #[test]
        fn latest_wins_history_keeps_all(temps in prop::collection::vec(40i64..110, 1..12)) {
            let mut s = EpisodeStore::new("e", MemoryMode::Full);
            for (i, t) in temps.iter().enumerate() {
                s.write(obs("Miami", *t, Timestamp::new(i as u32 + 1, 0))).unwrap();
            }
            let view = s.retrieve_state();
            prop_assert_eq!(&view.observations["Miami"].fields["temp_f"], &json!(temps[temps.len() - 1]));
            let hist: Vec<i64> = s.history(&p("obs.Miami")).iter().map(|r| r.value["temp_f"].as_i64().unwrap()).collect();
            prop_assert_eq!(hist, temps);
            prop_assert_eq!(s.retrieve_state(), view);
        }
    }
}
