use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::Value;

use super::{builtin_tools, ActionError, Effect, Tool, ToolSpec};
use crate::canonical::to_value;

/// Immutable-after-setup map of tool name to implementation, shared by all
/// episodes of a suite.
#[derive(Clone, Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, Arc<dyn Tool>>,
}

impl std::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.tools.keys()).finish()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::new();
        for tool in builtin_tools() {
            reg.register(tool).expect("builtin tool names are unique");
        }
        reg
    }

    pub fn register(&mut self, tool: Arc<dyn Tool>) -> Result<ToolSpec, ActionError> {
        let spec = tool.spec();
        if self.tools.contains_key(&spec.name) {
            return Err(ActionError::DuplicateTool(spec.name));
        }
        self.tools.insert(spec.name.clone(), tool);
        Ok(spec)
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn Tool>> {
        self.tools.get(name)
    }

    pub fn spec(&self, name: &str) -> Option<ToolSpec> {
        self.tools.get(name).map(|t| t.spec())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }

    pub fn effect(&self, name: &str) -> Option<Effect> {
        self.spec(name).map(|s| s.effect)
    }

    /// Schemas in the form kept in long-term memory.
    pub fn schemas(&self) -> BTreeMap<String, Value> {
        self.tools
            .iter()
            .map(|(name, tool)| (name.clone(), to_value(&tool.spec())))
            .collect()
    }
}
