//! Cognition: turns a memory view into a structured proposal.
//!
//! Policies never execute anything. They are pure functions of the view
//! plus an explicit seeded stream, so episodes can run in parallel.

mod adapter;
mod citation;
mod policy;
mod proposal;

pub use adapter::{AdapterPolicy, AdapterRequest, CannedTransport, OracleTransport, Transport};
pub use citation::{Citation, CitationError, Comparator};
pub use policy::{FaultModel, FaultyPolicy, OraclePolicy, UNSUPPORTED_EVIDENCE};
pub use proposal::{Assertion, Judgment, Proposal, QUERY, TERMINATE};

use crate::mem::StateView;

pub const META_DIRECTIVES_VERSION: &str = "1";

/// Domain-agnostic instructions given to model-backed cognition.
pub const META_DIRECTIVES: &str = "\
Read the task state below. It is the only source of truth.
Propose the minimal next action that advances the goal.
Do not repeat a call that already appears under approved actions or observations.
Cite every fact you rely on as a memory path with a comparison, e.g. obs.Miami.temp_f>=77.
When all required confirmations are present, propose terminate and cite termination.ready==true.
Reply with one JSON object: {\"propose\": tool, \"args\": [...], \"because\": [...], \"confidence\": number}.";

pub trait Cognition: Send {
    fn name(&self) -> &'static str;
    fn propose(&mut self, state: &StateView) -> Proposal;
}

impl<T: Cognition + ?Sized> Cognition for Box<T> {
    fn name(&self) -> &'static str {
        (**self).name()
    }

    fn propose(&mut self, state: &StateView) -> Proposal {
        (**self).propose(state)
    }
}
