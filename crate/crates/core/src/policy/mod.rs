//! Uniform interface to chat policies: collectors, generators, teachers,
//! verifiers and trained policies all answer the same multi-turn,
//! tool-declaring chat request.

mod remote;
pub mod scripted;
pub mod wire;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::tools::{Registry, ToolCall, ToolSpec};

pub use remote::RemoteConfig;
pub use scripted::Script;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    System,
    User,
    Assistant,
    ToolResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    /// Assistant turns only; `None` rather than an empty list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_calls: Option<Vec<ToolCall>>,
    /// ToolResult turns only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call_id: Option<String>,
}

impl ChatMessage {
    fn plain(role: Role, content: &str) -> Self {
        ChatMessage {
            role,
            content: content.to_string(),
            tool_calls: None,
            call_id: None,
        }
    }

    pub fn system(content: &str) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: &str) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: &str, calls: Vec<ToolCall>) -> Self {
        ChatMessage {
            tool_calls: (!calls.is_empty()).then_some(calls),
            ..Self::plain(Role::Assistant, content)
        }
    }

    pub fn tool_result(call_id: &str, content: &str) -> Self {
        ChatMessage {
            call_id: Some(call_id.to_string()),
            ..Self::plain(Role::ToolResult, content)
        }
    }

    pub fn calls(&self) -> &[ToolCall] {
        self.tool_calls.as_deref().unwrap_or(&[])
    }
}

impl From<&AssistantTurn> for ChatMessage {
    fn from(turn: &AssistantTurn) -> Self {
        ChatMessage::assistant(&turn.reasoning_text, turn.tool_calls.clone())
    }
}

/// A parsed assistant reply. `finished` holds exactly when no tool calls
/// were emitted; the text is then the candidate answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssistantTurn {
    pub reasoning_text: String,
    pub tool_calls: Vec<ToolCall>,
    pub finished: bool,
}

impl AssistantTurn {
    pub fn new(reasoning_text: &str, tool_calls: Vec<ToolCall>) -> Self {
        AssistantTurn {
            reasoning_text: reasoning_text.to_string(),
            finished: tool_calls.is_empty(),
            tool_calls,
        }
    }

    pub fn finish(text: &str) -> Self {
        AssistantTurn::new(text, Vec::new())
    }
}

/// A tool as declared to a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDecl {
    pub name: String,
    pub description: String,
    pub parameters: serde_json::Value,
}

impl From<&ToolSpec> for ToolDecl {
    fn from(spec: &ToolSpec) -> Self {
        ToolDecl {
            name: spec.name.clone(),
            description: spec.description.clone(),
            parameters: spec.json_schema(),
        }
    }
}

impl ToolDecl {
    pub fn required_params(&self) -> Vec<(String, String)> {
        let required: Vec<&str> = self.parameters["required"]
            .as_array()
            .map(|a| a.iter().filter_map(|v| v.as_str()).collect())
            .unwrap_or_default();
        required
            .into_iter()
            .map(|name| {
                let ty = self.parameters["properties"][name]["type"]
                    .as_str()
                    .unwrap_or("string")
                    .to_string();
                (name.to_string(), ty)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub top_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_turn_tokens: Option<u32>,
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding {
            temperature: 1.0,
            top_p: 1.0,
            max_turn_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed assistant turn ({reason}): {raw}")]
    MalformedTurn { raw: String, reason: String },
    #[error("context window exceeded: {0}")]
    ContextOverflow(String),
    #[error("declared tool `{0}` is not registered")]
    UndeclaredTool(String),
    #[error("invalid conversation: {0}")]
    InvalidConversation(String),
}

enum Target {
    Remote(remote::RemoteClient),
    Scripted(Arc<dyn Script>),
}

/// A chat policy, remote or scripted. Shareable across threads; all
/// conversation state lives in the caller's message list.
pub struct PolicyEndpoint {
    name: String,
    pub decoding: Decoding,
    target: Target,
}

impl fmt::Debug for PolicyEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.target {
            Target::Remote(_) => "remote",
            Target::Scripted(_) => "scripted",
        };
        f.debug_struct("PolicyEndpoint")
            .field("name", &self.name)
            .field("kind", &kind)
            .finish()
    }
}

impl PolicyEndpoint {
    pub fn scripted(name: &str, script: Arc<dyn Script>) -> Self {
        PolicyEndpoint {
            name: name.to_string(),
            decoding: Decoding::default(),
            target: Target::Scripted(script),
        }
    }

    pub fn remote(name: &str, config: RemoteConfig) -> Self {
        PolicyEndpoint {
            name: name.to_string(),
            decoding: Decoding::default(),
            target: Target::Remote(remote::RemoteClient::new(config)),
        }
    }

    pub fn with_decoding(mut self, decoding: Decoding) -> Self {
        self.decoding = decoding;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_scripted(&self) -> bool {
        matches!(self.target, Target::Scripted(_))
    }

    /// Sends one turn with already-resolved tool declarations.
    /// `sample_seed` distinguishes independent samples of the same history.
    pub fn complete(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolDecl],
        sample_seed: u64,
    ) -> Result<AssistantTurn, PolicyError> {
        check_conversation(messages)?;
        let turn = match &self.target {
            Target::Scripted(s) => s.respond(messages, tools, sample_seed)?,
            Target::Remote(c) => c.chat(messages, tools, &self.decoding, sample_seed)?,
        };
        Ok(AssistantTurn::new(&turn.reasoning_text, turn.tool_calls))
    }
}

/// Resolves `declared_tools` against the registry, then sends one turn.
/// Unregistered names fail before anything reaches the endpoint.
pub fn chat(
    endpoint: &PolicyEndpoint,
    messages: &[ChatMessage],
    declared_tools: &[String],
    registry: &Registry,
    sample_seed: u64,
) -> Result<AssistantTurn, PolicyError> {
    let tools = declare_tools(declared_tools, registry)?;
    endpoint.complete(messages, &tools, sample_seed)
}

pub fn declare_tools(names: &[String], registry: &Registry) -> Result<Vec<ToolDecl>, PolicyError> {
    names
        .iter()
        .map(|n| {
            registry
                .get(n)
                .map(ToolDecl::from)
                .ok_or_else(|| PolicyError::UndeclaredTool(n.clone()))
        })
        .collect()
}

/// Structural checks on a history before it is sent.
pub fn check_conversation(messages: &[ChatMessage]) -> Result<(), PolicyError> {
    let invalid = |m: String| Err(PolicyError::InvalidConversation(m));
    let Some(first) = messages.first() else {
        return invalid("no messages".into());
    };
    if !matches!(first.role, Role::System | Role::User) {
        return invalid("conversation must open with a system or user message".into());
    }
    let mut issued: HashSet<&str> = HashSet::new();
    let mut prev: Option<Role> = None;
    for (i, m) in messages.iter().enumerate() {
        if m.tool_calls.is_some() && m.role != Role::Assistant {
            return invalid(format!("message {i}: only assistant turns carry tool calls"));
        }
        if m.call_id.is_some() != (m.role == Role::ToolResult) {
            return invalid(format!("message {i}: call_id belongs on tool results only"));
        }
        match m.role {
            Role::Assistant if prev == Some(Role::Assistant) => {
                return invalid(format!("message {i}: consecutive assistant turns"));
            }
            Role::Assistant => issued.extend(m.calls().iter().map(|c| c.call_id.as_str())),
            Role::ToolResult => {
                let id = m.call_id.as_deref().unwrap_or_default();
                if !issued.contains(id) {
                    return invalid(format!("message {i}: tool result for unissued call `{id}`"));
                }
            }
            _ => {}
        }
        prev = Some(m.role);
    }
    if prev == Some(Role::Assistant) {
        return invalid("last message is an assistant turn".into());
    }
    Ok(())
}
