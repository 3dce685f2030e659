//! Scenario definitions, generators and the ground-truth outcome oracle.

mod generator;
mod oracle;
mod rules;
mod spec;

pub use generator::*;
pub use oracle::{oracle_outcome, Effect, ExpectedOutcome, Resolution};
pub use rules::{email_body, executed, plan_satisfied, withhold_note, Plan, Step};
pub use spec::*;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("template {0} out of range")]
    TemplateOutOfRange(u32),
    #[error("unsupported city count {0}")]
    CityCount(usize),
}
