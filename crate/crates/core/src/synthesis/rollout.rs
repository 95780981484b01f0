use std::collections::HashSet;

use super::{RolloutTrace, TraceStep};
use crate::policy::{declare_tools, ChatMessage, PolicyEndpoint, PolicyError};
use crate::tools::{CallLimits, Observation, ObservationStatus, Registry};

/// Bounds on a tool-use rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopLimits {
    /// Maximum tool calls executed; `None` for unbounded.
    pub max_calls: Option<usize>,
    /// Maximum assistant turns requested.
    pub max_turns: usize,
    pub call_limits: CallLimits,
}

impl LoopLimits {
    pub fn calls(max_calls: usize) -> Self {
        LoopLimits {
            max_calls: Some(max_calls),
            max_turns: 2 * max_calls + 2,
            call_limits: CallLimits::default(),
        }
    }

    pub fn turns(max_turns: usize) -> Self {
        LoopLimits {
            max_calls: None,
            max_turns,
            call_limits: CallLimits::default(),
        }
    }
}

/// A finished conversation with its trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rollout {
    pub messages: Vec<ChatMessage>,
    pub trace: RolloutTrace,
}

impl Rollout {
    pub fn final_answer(&self) -> Option<&str> {
        self.trace.final_answer()
    }
}

/// Drives `endpoint` over `messages`, executing each emitted call against
/// `registry` and feeding observations back, until a finished turn or a
/// limit. Calls to tools outside `toolset` are answered with a tool error
/// and never reach a backend.
pub fn run_tool_loop(
    endpoint: &PolicyEndpoint,
    registry: &Registry,
    toolset: &[String],
    mut messages: Vec<ChatMessage>,
    limits: &LoopLimits,
    sample_seed: u64,
) -> Result<Rollout, PolicyError> {
    let decls = declare_tools(toolset, registry)?;
    let allowed: HashSet<&str> = toolset.iter().map(String::as_str).collect();
    let mut used_ids: HashSet<String> = HashSet::new();
    let mut trace = RolloutTrace::default();
    let budget_left = |t: &RolloutTrace| limits.max_calls.is_none_or(|m| t.budget_used < m);

    for _ in 0..limits.max_turns {
        let turn = endpoint.complete(&messages, &decls, sample_seed)?;
        if turn.finished {
            messages.push(ChatMessage::from(&turn));
            trace.steps.push(TraceStep {
                reasoning: turn.reasoning_text,
                action: None,
                observation: None,
            });
            return Ok(Rollout { messages, trace });
        }

        let mut executed = Vec::new();
        let mut results = Vec::new();
        for (i, mut call) in turn.tool_calls.into_iter().enumerate() {
            if !budget_left(&trace) {
                trace.truncated = true;
                break;
            }
            if call.call_id.is_empty() || used_ids.contains(&call.call_id) {
                call.call_id = format!("{}~{}", call.call_id, trace.budget_used + 1);
            }
            used_ids.insert(call.call_id.clone());
            let obs = if allowed.contains(call.tool_name.as_str()) {
                registry.execute(&call, &limits.call_limits)
            } else {
                Observation::failure(
                    &call.call_id,
                    ObservationStatus::ToolError,
                    format!("tool `{}` is not available in this toolset", call.tool_name),
                )
            };
            results.push(ChatMessage::tool_result(&call.call_id, &obs.payload));
            trace.steps.push(TraceStep {
                reasoning: if i == 0 { turn.reasoning_text.clone() } else { String::new() },
                action: Some(call.clone()),
                observation: Some(obs),
            });
            trace.budget_used += 1;
            executed.push(call);
        }
        messages.push(ChatMessage::assistant(&turn.reasoning_text, executed));
        messages.extend(results);
        if trace.truncated || !budget_left(&trace) {
            trace.truncated = true;
            return Ok(Rollout { messages, trace });
        }
    }
    trace.truncated = true;
    Ok(Rollout { messages, trace })
}
