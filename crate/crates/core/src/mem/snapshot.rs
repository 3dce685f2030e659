use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ArchivedEpisode, EpisodeStore, EpisodeSummary, MemError, MemRecord, MemoryMode};
use crate::canonical::{canonical_bytes, canonical_hash};

/// Frozen copy of an episode's records with a hash over their canonical form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemSnapshot {
    pub episode_id: String,
    pub cycle: u32,
    pub records: Vec<MemRecord>,
    pub content_hash: String,
}

impl MemSnapshot {
    pub fn new(episode_id: &str, cycle: u32, mut records: Vec<MemRecord>) -> Self {
        records.sort_by(|a, b| a.path.cmp(&b.path).then(a.timestamp.cmp(&b.timestamp)));
        let content_hash = canonical_hash(&records);
        Self {
            episode_id: episode_id.to_string(),
            cycle,
            records,
            content_hash,
        }
    }

    pub fn recompute_hash(&self) -> String {
        canonical_hash(&self.records)
    }

    pub fn verify(&self) -> Result<(), MemError> {
        let recomputed = self.recompute_hash();
        if recomputed != self.content_hash {
            return Err(MemError::HashMismatch {
                stored: self.content_hash.clone(),
                recomputed,
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        canonical_bytes(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MemError> {
        let snap: MemSnapshot =
            serde_json::from_slice(bytes).map_err(|e| MemError::Malformed(e.to_string()))?;
        snap.verify()?;
        Ok(snap)
    }

    pub fn file_name(&self) -> String {
        format!("{}.cycle{}.snap", self.episode_id, self.cycle)
    }

    pub fn write_to_dir(&self, dir: &Path) -> Result<PathBuf, MemError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(self.file_name());
        fs::write(&path, self.to_bytes())?;
        Ok(path)
    }

    /// Rebuilds a full-history store holding exactly these records.
    pub fn restore(&self) -> Result<EpisodeStore, MemError> {
        let mut ordered = self.records.clone();
        ordered.sort_by_key(|r| r.timestamp);
        let mut store = EpisodeStore::new(&self.episode_id, MemoryMode::Full);
        for rec in ordered {
            store.write(rec)?;
        }
        store.drain_journal();
        Ok(store)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveIndexEntry {
    pub snapshot_file: String,
    pub summary: EpisodeSummary,
}

impl ArchivedEpisode {
    /// Writes archived snapshots plus `index.json` (episode id → summary).
    pub fn write_archive<'a, I>(dir: &Path, episodes: I) -> Result<PathBuf, MemError>
    where
        I: IntoIterator<Item = &'a ArchivedEpisode>,
    {
        fs::create_dir_all(dir)?;
        let mut index = BTreeMap::new();
        for ep in episodes {
            ep.snapshot.write_to_dir(dir)?;
            index.insert(
                ep.summary.episode_id.clone(),
                ArchiveIndexEntry {
                    snapshot_file: ep.snapshot.file_name(),
                    summary: ep.summary.clone(),
                },
            );
        }
        let index_path = dir.join("index.json");
        fs::write(&index_path, canonical_bytes(&index))?;
        Ok(index_path)
    }

    pub fn read_index(dir: &Path) -> Result<BTreeMap<String, ArchiveIndexEntry>, MemError> {
        let bytes = fs::read(dir.join("index.json"))?;
        serde_json::from_slice(&bytes).map_err(|e| MemError::Malformed(e.to_string()))
    }
}
