use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Citation, CitationError};
use crate::action::ToolCall;

pub const TERMINATE: &str = "terminate";
pub const QUERY: &str = "query";

fn full_confidence() -> f64 {
    1.0
}

/// A free-text claim paired with the memory fact that supports it,
/// written `path=value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub claim: String,
    pub evidence: String,
}

/// Conditional conclusion to be recorded in memory when the proposal is approved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub proposition: String,
    pub evidence: Vec<String>,
}

/// Structured output of cognition: one proposed action (or termination) with
/// the evidence that justifies it. Never executes anything itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub propose: String,
    #[serde(default)]
    pub args: Vec<Value>,
    #[serde(default)]
    pub because: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assertions: Vec<Assertion>,
    #[serde(default = "full_confidence")]
    pub confidence: f64,
    /// Independent calls to approve together with the primary one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub batch: Vec<ToolCall>,
    /// Optional follow-ups that must wait for the primary action's result.
    #[serde(default, rename = "then", skip_serializing_if = "Vec::is_empty")]
    pub followups: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judgment: Option<Judgment>,
    /// Set when the policy could not produce a proposal (e.g. unparseable
    /// adapter output); the loop records it as a failure event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl Proposal {
    pub fn action(call: ToolCall, because: Vec<Citation>) -> Self {
        Self {
            propose: call.tool,
            args: call.args,
            because: because.iter().map(Citation::to_string).collect(),
            assertions: Vec::new(),
            confidence: 1.0,
            batch: Vec::new(),
            followups: Vec::new(),
            judgment: None,
            failure: None,
        }
    }

    pub fn terminate(because: Vec<Citation>) -> Self {
        Self::action(ToolCall::new(TERMINATE, Vec::<String>::new()), because)
    }

    pub fn query(question: impl Into<String>) -> Self {
        Self::action(ToolCall::new(QUERY, [question.into()]), Vec::new())
    }

    pub fn is_terminate(&self) -> bool {
        self.propose == TERMINATE
    }

    pub fn is_query(&self) -> bool {
        self.propose == QUERY
    }

    /// The primary tool call, unless this is a terminate or query proposal.
    pub fn call(&self) -> Option<ToolCall> {
        (!self.is_terminate() && !self.is_query()).then(|| ToolCall {
            tool: self.propose.clone(),
            args: self.args.clone(),
        })
    }

    pub fn citations(&self) -> Vec<Result<Citation, CitationError>> {
        self.because.iter().map(|c| Citation::parse(c)).collect()
    }

    /// Checks the structural invariants every well-formed proposal satisfies.
    pub fn validate(&self) -> Result<(), String> {
        if self.propose.trim().is_empty() {
            return Err("empty propose field".into());
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        for c in self.citations() {
            c.map_err(|e| e.to_string())?;
        }
        if self.is_terminate()
            && !self.citations().iter().flatten().any(|c| {
                matches!(c.path.prefix(), "goal" | "termination")
            })
        {
            return Err("terminate must cite goal or termination evidence".into());
        }
        Ok(())
    }
}
