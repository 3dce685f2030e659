//! External memory: typed, time-stamped, path-addressed records per episode,
//! plus long-term memory and an archive of terminated episodes.

mod path;
mod record;
mod snapshot;
mod store;
mod view;

use thiserror::Error;

pub use path::MemPath;
pub use record::{MemRecord, RecordKind, Timestamp};
pub use snapshot::{ArchiveIndexEntry, MemSnapshot};
pub use store::{
    ArchivedEpisode, EpisodeStore, EpisodeSummary, LongTermMemory, MemStore, MemoryMode,
    DEFAULT_WINDOW_SIZE,
};
pub use view::{
    ActionEntry, FailureEntry, JudgmentEntry, NoteEntry, ObservationEntry, PendingEntry,
    StateView, TerminationView,
};

#[derive(Debug, Error)]
pub enum MemError {
    #[error("invalid path {path:?}: {reason}")]
    InvalidPath { path: String, reason: String },
    #[error("record kind {kind:?} does not match path {path:?}")]
    KindMismatch { path: String, kind: RecordKind },
    #[error("invalid value at {path}: {reason}")]
    InvalidValue { path: String, reason: String },
    #[error("non-monotonic write in episode {episode}: {attempted} is not after {latest} (loop ordering bug)")]
    NonMonotonic {
        episode: String,
        attempted: Timestamp,
        latest: Timestamp,
    },
    #[error("unknown episode {0}")]
    UnknownEpisode(String),
    #[error("episode {0} already exists")]
    EpisodeExists(String),
    #[error("episode {0} has not terminated")]
    NotTerminated(String),
    #[error("episode {0} is already archived")]
    AlreadyArchived(String),
    #[error("snapshot hash mismatch: stored {stored}, recomputed {recomputed}")]
    HashMismatch { stored: String, recomputed: String },
    #[error("malformed snapshot: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
