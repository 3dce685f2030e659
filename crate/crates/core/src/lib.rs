//! Structured cognitive loop runtime.
//!
//! An agent cycle is split into retrieval from external memory, proposal
//! generation by a cognition policy, guarded approval by a controller, and
//! tool execution through an action layer. Every phase is written to a
//! hash-chained trace that can be verified and replayed.

pub mod action;
pub mod canonical;
pub mod cognition;
pub mod control;
pub mod mem;
pub mod metrics;
pub mod runtime;
pub mod scenarios;
pub mod suite;

pub use action::{ToolCall, ToolRegistry, ToolResult, ToolSpec};
pub use cognition::{Cognition, FaultModel, Proposal};
pub use control::{Controller, Decision, DedupKey, Guard, TerminationStatus, Verdict};
pub use mem::{EpisodeStore, MemPath, MemRecord, MemSnapshot, MemStore, MemoryMode, StateView};
pub use metrics::{score_episode, EpisodeScore, SuiteReport};
pub use runtime::{run_episode, replay, AgentConfig, CognitionKind, EpisodeOutcome, System, Trace};
pub use scenarios::{generate_episode, oracle_outcome, EpisodeSpec, Scenario};
pub use suite::{run_suite, RunManifest, SuiteConfig};
