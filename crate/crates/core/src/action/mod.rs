//! Action layer: tool registry, argument validation, result normalization and
//! bounded retry. Tools never see episode memory; results flow back through
//! the loop.

mod env;
mod registry;
mod tools;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical::canonical_string;

pub use env::ToolEnv;
pub use registry::ToolRegistry;
pub use tools::{builtin_tools, normalize_result};

pub const DEFAULT_MAX_RETRIES: u32 = 2;
/// Base of the recorded exponential backoff schedule; nothing actually sleeps.
pub const BACKOFF_BASE_MS: u64 = 100;

/// A named tool invocation with positional arguments.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: String,
    pub args: Vec<Value>,
}

impl ToolCall {
    pub fn new<S: Into<String>>(tool: impl Into<String>, args: impl IntoIterator<Item = S>) -> Self {
        Self {
            tool: tool.into(),
            args: args.into_iter().map(|a| Value::String(a.into())).collect(),
        }
    }

    pub fn new_raw(tool: &str, args: Vec<Value>) -> Self {
        Self {
            tool: tool.to_string(),
            args,
        }
    }

    pub fn canonical_args(&self) -> String {
        canonical_string(&self.args)
    }

    pub fn arg_str(&self, i: usize) -> Option<&str> {
        self.args.get(i).and_then(Value::as_str)
    }
}

impl fmt::Display for ToolCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(|a| a.to_string()).collect();
        write!(f, "{}({})", self.tool, args.join(", "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgType {
    /// Free text.
    Text,
    /// Used as a memory path segment (city, contact name, score input).
    Entity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgSpec {
    pub name: String,
    pub ty: ArgType,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Determinism {
    Deterministic,
    SeededNoisy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    /// Gathers information; the result becomes an observation record.
    Query,
    /// Changes the world; the result is kept on the approved-action record.
    SideEffect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub args: Vec<ArgSpec>,
    pub result_fields: Vec<String>,
    pub determinism: Determinism,
    pub effect: Effect,
    /// For query tools: sub-prefix under `obs` where results are stored
    /// (`""` puts `get_weather("Miami")` at `obs.Miami`).
    pub observes: Option<String>,
    pub failure_modes: Vec<String>,
}

impl ToolSpec {
    pub fn validate_args(&self, args: &[Value]) -> Result<(), String> {
        if args.len() != self.args.len() {
            return Err(format!(
                "{} expects {} argument(s), got {}",
                self.name,
                self.args.len(),
                args.len()
            ));
        }
        for (spec, arg) in self.args.iter().zip(args) {
            let Some(s) = arg.as_str() else {
                return Err(format!("argument {} must be a string", spec.name));
            };
            if s.trim().is_empty() {
                return Err(format!("argument {} is empty", spec.name));
            }
            if spec.ty == ArgType::Entity
                && (s.trim() != s
                    || !s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | ' ')))
            {
                return Err(format!("argument {} is not a valid entity name: {s:?}", spec.name));
            }
        }
        Ok(())
    }

    /// Observation key (path tail under `obs`) for a call of this tool.
    pub fn observation_key(&self, args: &[Value]) -> Option<String> {
        let sub = self.observes.as_ref()?;
        let entity = args.first()?.as_str()?;
        Some(if sub.is_empty() {
            entity.to_string()
        } else {
            format!("{sub}.{entity}")
        })
    }

    /// Inverse of [`ToolSpec::observation_key`].
    pub fn call_for_observation(&self, key: &str) -> Option<ToolCall> {
        let sub = self.observes.as_ref()?;
        let entity = if sub.is_empty() {
            (!key.contains('.')).then_some(key)?
        } else {
            key.strip_prefix(sub.as_str())?.strip_prefix('.')?
        };
        Some(ToolCall::new(self.name.clone(), [entity]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub call: ToolCall,
    pub outcome: Outcome,
    pub value: Value,
    pub attempts: u32,
    /// Backoff delays that a live deployment would wait between attempts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub backoff_ms: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ToolResult {
    pub fn is_ok(&self) -> bool {
        self.outcome == Outcome::Ok
    }
}

/// Failure raised by a tool body.
#[derive(Clone, Debug, PartialEq, Error)]
pub enum ToolError {
    #[error("transient: {0}")]
    Transient(String),
    #[error("{0}")]
    Failed(String),
}

#[derive(Debug, Error)]
pub enum ActionError {
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("tool {0:?} is already registered")]
    DuplicateTool(String),
}

/// Runs an approved call with validation, normalization and bounded retry.
pub fn execute(
    registry: &ToolRegistry,
    call: &ToolCall,
    env: &mut ToolEnv,
) -> Result<ToolResult, ActionError> {
    let tool = registry
        .get(&call.tool)
        .ok_or_else(|| ActionError::UnknownTool(call.tool.clone()))?;
    let spec = tool.spec();
    if let Err(why) = spec.validate_args(&call.args) {
        return Ok(ToolResult {
            call: call.clone(),
            outcome: Outcome::Failed,
            value: Value::Null,
            attempts: 1,
            backoff_ms: Vec::new(),
            error: Some(format!("invalid arguments: {why}")),
        });
    }

    let max_attempts = env.max_retries + 1;
    let mut backoff_ms = Vec::new();
    let mut last_error = String::new();
    for attempt in 1..=max_attempts {
        let injected = attempt < max_attempts && env.inject_transient();
        let result = if injected {
            Err(ToolError::Transient("injected transient failure".into()))
        } else {
            tool.invoke(&call.args, env)
        };
        match result {
            Ok(raw) => {
                return Ok(ToolResult {
                    call: call.clone(),
                    outcome: Outcome::Ok,
                    value: normalize_result(raw),
                    attempts: attempt,
                    backoff_ms,
                    error: None,
                });
            }
            Err(ToolError::Transient(why)) => {
                last_error = why;
                if attempt < max_attempts {
                    backoff_ms.push(BACKOFF_BASE_MS << (attempt - 1));
                }
            }
            Err(ToolError::Failed(why)) => {
                return Ok(ToolResult {
                    call: call.clone(),
                    outcome: Outcome::Failed,
                    value: Value::Null,
                    attempts: attempt,
                    backoff_ms,
                    error: Some(why),
                });
            }
        }
    }
    Ok(ToolResult {
        call: call.clone(),
        outcome: Outcome::Failed,
        value: Value::Null,
        attempts: max_attempts,
        backoff_ms,
        error: Some(last_error),
    })
}

/// A tool implementation. Bodies are pure given the episode environment.
pub trait Tool: Send + Sync {
    fn spec(&self) -> ToolSpec;
    fn invoke(&self, args: &[Value], env: &mut ToolEnv) -> Result<Value, ToolError>;
}
