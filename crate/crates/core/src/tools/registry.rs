use std::collections::HashSet;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::backend::{builtin_backend, BackendFailure, HttpBackend, ToolBackend};
use super::{
    truncate_payload, Backend, CallLimits, Observation, ObservationStatus, ToolCall, ToolSpec,
    EMPTY_RESULT_MARKER,
};

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("tool `{0}` is already registered")]
    DuplicateName(String),
    #[error("malformed schema for tool `{tool}`: {reason}")]
    MalformedSchema { tool: String, reason: String },
    #[error("tool `{tool}` names unknown builtin backend `{backend}`")]
    UnknownBuiltin { tool: String, backend: String },
    #[error("cannot read manifest {path}: {reason}")]
    Manifest { path: String, reason: String },
}

/// On-disk registry document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ToolManifest {
    pub tools: Vec<ToolSpec>,
}

impl ToolManifest {
    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let manifest_err = |reason: String| RegistryError::Manifest {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| manifest_err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| manifest_err(e.to_string()))
    }
}

/// Stable reference to a registered tool.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ToolHandle {
    index: usize,
    name: String,
}

impl ToolHandle {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

struct Entry {
    spec: ToolSpec,
    backend: Arc<dyn ToolBackend>,
}

/// The tool pool. Built once, then shared read-only across workers.
#[derive(Default)]
pub struct Registry {
    tools: IndexMap<String, Entry>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("tools", &self.tools.keys().collect::<Vec<_>>())
            .finish()
    }
}

fn check_spec(spec: &ToolSpec) -> Result<(), RegistryError> {
    let malformed = |reason: String| RegistryError::MalformedSchema {
        tool: spec.name.clone(),
        reason,
    };
    if spec.name.is_empty() || spec.name.chars().any(char::is_whitespace) {
        return Err(malformed("name must be non-empty and contain no whitespace".into()));
    }
    let mut seen = HashSet::new();
    let mut optional_seen = false;
    for p in &spec.parameters {
        if p.name.is_empty() {
            return Err(malformed("parameter with empty name".into()));
        }
        if !seen.insert(p.name.as_str()) {
            return Err(malformed(format!("parameter `{}` declared twice", p.name)));
        }
        if p.param_type.is_none() {
            return Err(malformed(format!("parameter `{}` has no type tag", p.name)));
        }
        if p.required && optional_seen {
            return Err(malformed(format!(
                "required parameter `{}` declared after an optional one",
                p.name
            )));
        }
        optional_seen |= !p.required;
    }
    Ok(())
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    /// Builds a registry from a manifest file.
    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        Registry::from_manifest(ToolManifest::load(path)?)
    }

    pub fn from_manifest(manifest: ToolManifest) -> Result<Self, RegistryError> {
        let mut reg = Registry::new();
        for spec in manifest.tools {
            reg.register_tool(spec)?;
        }
        Ok(reg)
    }

    /// Registers `spec`, instantiating the backend it names.
    pub fn register_tool(&mut self, spec: ToolSpec) -> Result<ToolHandle, RegistryError> {
        check_spec(&spec)?;
        let backend: Arc<dyn ToolBackend> = match &spec.backend {
            Backend::Builtin { name, seed } => {
                builtin_backend(name, *seed).ok_or_else(|| RegistryError::UnknownBuiltin {
                    tool: spec.name.clone(),
                    backend: name.clone(),
                })?
            }
            Backend::Remote { url, method, auth_env } => {
                Arc::new(HttpBackend::new(url, method, auth_env.clone()))
            }
        };
        self.insert(spec, backend)
    }

    /// Registers `spec` with an explicit backend, ignoring `spec.backend`.
    pub fn register_with_backend(
        &mut self,
        spec: ToolSpec,
        backend: Arc<dyn ToolBackend>,
    ) -> Result<ToolHandle, RegistryError> {
        check_spec(&spec)?;
        self.insert(spec, backend)
    }

    fn insert(&mut self, spec: ToolSpec, backend: Arc<dyn ToolBackend>) -> Result<ToolHandle, RegistryError> {
        if self.tools.contains_key(&spec.name) {
            return Err(RegistryError::DuplicateName(spec.name));
        }
        let name = spec.name.clone();
        let (index, _) = self.tools.insert_full(name.clone(), Entry { spec, backend });
        Ok(ToolHandle { index, name })
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.get(name).map(|e| &e.spec)
    }

    pub fn handle(&self, name: &str) -> Option<ToolHandle> {
        self.tools.get_index_of(name).map(|index| ToolHandle {
            index,
            name: name.to_string(),
        })
    }

    pub fn spec(&self, handle: &ToolHandle) -> Option<&ToolSpec> {
        self.tools.get_index(handle.index).map(|(_, e)| &e.spec)
    }

    /// Registered specs in registration order.
    pub fn specs(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tools.values().map(|e| &e.spec)
    }

    /// Validates a call against its tool's schema without executing it.
    pub fn check_call(&self, call: &ToolCall) -> Result<(), String> {
        let entry = self
            .tools
            .get(&call.tool_name)
            .ok_or_else(|| format!("unknown tool `{}`", call.tool_name))?;
        entry
            .spec
            .check_arguments(&call.arguments)
            .map_err(|m| format!("argument mismatch for `{}`: {m}", call.tool_name))
    }

    /// Executes `call`. Every failure, including a panicking backend, is
    /// reported through the returned observation's status.
    pub fn execute(&self, call: &ToolCall, limits: &CallLimits) -> Observation {
        let started = Instant::now();
        if let Err(msg) = self.check_call(call) {
            return Observation::failure(&call.call_id, ObservationStatus::ToolError, msg);
        }
        let entry = &self.tools[call.tool_name.as_str()];
        let outcome = catch_unwind(AssertUnwindSafe(|| {
            entry.backend.invoke(&call.tool_name, &call.arguments, limits)
        }))
        .unwrap_or_else(|_| Err(BackendFailure::Tool("tool backend panicked".into())));
        let (status, payload) = match outcome {
            Ok(p) if p.is_empty() => (ObservationStatus::Ok, EMPTY_RESULT_MARKER.to_string()),
            Ok(p) => (ObservationStatus::Ok, truncate_payload(p, limits.max_payload)),
            Err(BackendFailure::Tool(m)) => (ObservationStatus::ToolError, nonempty(m)),
            Err(BackendFailure::Transport(m)) => (ObservationStatus::TransportError, nonempty(m)),
            Err(BackendFailure::Timeout(m)) => (ObservationStatus::Timeout, nonempty(m)),
        };
        Observation {
            call_id: call.call_id.clone(),
            status,
            payload,
            latency: started.elapsed(),
        }
    }
}

fn nonempty(m: String) -> String {
    if m.is_empty() {
        "tool failed without a diagnostic".to_string()
    } else {
        m
    }
}

/// Free-function form of [`Registry::execute`].
pub fn execute_tool(call: &ToolCall, registry: &Registry, limits: &CallLimits) -> Observation {
    registry.execute(call, limits)
}
