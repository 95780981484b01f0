//! Chat-completions function-calling wire format.

use serde_json::{json, Map, Value};

use super::{AssistantTurn, ChatMessage, Decoding, PolicyError, Role, ToolDecl};
use crate::tools::ToolCall;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("wire message {index}: {reason}")]
pub struct WireError {
    pub index: usize,
    pub reason: String,
}

fn call_to_wire(call: &ToolCall) -> Value {
    json!({
        "id": call.call_id,
        "type": "function",
        "function": {
            "name": call.tool_name,
            "arguments": serde_json::to_string(&call.arguments).unwrap_or_else(|_| "{}".into()),
        }
    })
}

pub fn message_to_wire(m: &ChatMessage) -> Value {
    match m.role {
        Role::System => json!({"role": "system", "content": m.content}),
        Role::User => json!({"role": "user", "content": m.content}),
        Role::Assistant => {
            let mut obj = json!({"role": "assistant", "content": m.content});
            if let Some(calls) = &m.tool_calls {
                obj["tool_calls"] = Value::Array(calls.iter().map(call_to_wire).collect());
            }
            obj
        }
        Role::ToolResult => json!({
            "role": "tool",
            "tool_call_id": m.call_id.clone().unwrap_or_default(),
            "content": m.content,
        }),
    }
}

pub fn messages_to_wire(messages: &[ChatMessage]) -> Value {
    Value::Array(messages.iter().map(message_to_wire).collect())
}

/// Parses one wire tool call. Argument strings must decode to a JSON
/// object; anything else is a malformed turn carrying the raw text.
pub fn call_from_wire(v: &Value) -> Result<ToolCall, PolicyError> {
    let malformed = |reason: &str| PolicyError::MalformedTurn {
        raw: v.to_string(),
        reason: reason.to_string(),
    };
    let id = v["id"].as_str().ok_or_else(|| malformed("tool call lacks id"))?;
    let name = v["function"]["name"]
        .as_str()
        .filter(|n| !n.is_empty())
        .ok_or_else(|| malformed("tool call lacks function name"))?;
    let arguments = match &v["function"]["arguments"] {
        Value::String(raw) if raw.trim().is_empty() => Map::new(),
        Value::String(raw) => match serde_json::from_str::<Value>(raw) {
            Ok(Value::Object(map)) => map,
            Ok(_) => {
                return Err(PolicyError::MalformedTurn {
                    raw: raw.clone(),
                    reason: "arguments are not a JSON object".into(),
                })
            }
            Err(e) => {
                return Err(PolicyError::MalformedTurn {
                    raw: raw.clone(),
                    reason: format!("unparseable arguments: {e}"),
                })
            }
        },
        Value::Object(map) => map.clone(),
        Value::Null => Map::new(),
        _ => return Err(malformed("arguments must be a string or object")),
    };
    Ok(ToolCall {
        call_id: id.to_string(),
        tool_name: name.to_string(),
        arguments,
    })
}

fn content_of(v: &Value) -> String {
    match &v["content"] {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join(""),
        _ => String::new(),
    }
}

pub fn message_from_wire(index: usize, v: &Value) -> Result<ChatMessage, WireError> {
    let err = |reason: String| WireError { index, reason };
    let content = content_of(v);
    match v["role"].as_str() {
        Some("system") => Ok(ChatMessage::system(&content)),
        Some("user") => Ok(ChatMessage::user(&content)),
        Some("assistant") => {
            let calls = match v.get("tool_calls") {
                Some(Value::Array(items)) => items
                    .iter()
                    .map(call_from_wire)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| err(e.to_string()))?,
                Some(Value::Null) | None => Vec::new(),
                Some(_) => return Err(err("tool_calls must be an array".into())),
            };
            Ok(ChatMessage::assistant(&content, calls))
        }
        Some("tool") => {
            let id = v["tool_call_id"]
                .as_str()
                .ok_or_else(|| err("tool message lacks tool_call_id".into()))?;
            Ok(ChatMessage::tool_result(id, &content))
        }
        other => Err(err(format!("unknown role {other:?}"))),
    }
}

pub fn messages_from_wire(v: &Value) -> Result<Vec<ChatMessage>, WireError> {
    let items = v.as_array().ok_or_else(|| WireError {
        index: 0,
        reason: "messages must be an array".into(),
    })?;
    items.iter().enumerate().map(|(i, m)| message_from_wire(i, m)).collect()
}

pub fn tool_to_wire(t: &ToolDecl) -> Value {
    json!({
        "type": "function",
        "function": {
            "name": t.name,
            "description": t.description,
            "parameters": t.parameters,
        }
    })
}

pub fn request_body(
    model: &str,
    messages: &[ChatMessage],
    tools: &[ToolDecl],
    decoding: &Decoding,
    seed: u64,
) -> Value {
    let mut body = json!({
        "model": model,
        "messages": messages_to_wire(messages),
        "temperature": decoding.temperature,
        "top_p": decoding.top_p,
        "seed": seed,
    });
    if !tools.is_empty() {
        body["tools"] = Value::Array(tools.iter().map(tool_to_wire).collect());
    }
    if let Some(max) = decoding.max_turn_tokens {
        body["max_tokens"] = json!(max);
    }
    body
}

/// Extracts the assistant turn from a chat-completions response body.
pub fn parse_response(body: &Value) -> Result<AssistantTurn, PolicyError> {
    if let Some(err) = body.get("error") {
        let code = err["code"].as_str().unwrap_or_default();
        let message = err["message"].as_str().unwrap_or_default().to_string();
        if code == "context_length_exceeded" || message.contains("maximum context length") {
            return Err(PolicyError::ContextOverflow(message));
        }
        return Err(PolicyError::Transport(format!("endpoint error: {err}")));
    }
    let message = &body["choices"][0]["message"];
    if !message.is_object() {
        return Err(PolicyError::MalformedTurn {
            raw: body.to_string(),
            reason: "response has no choices[0].message".into(),
        });
    }
    let calls = match &message["tool_calls"] {
        Value::Array(items) => items.iter().map(call_from_wire).collect::<Result<Vec<_>, _>>()?,
        Value::Null => Vec::new(),
        _ => {
            return Err(PolicyError::MalformedTurn {
                raw: message.to_string(),
                reason: "tool_calls must be an array".into(),
            })
        }
    };
    Ok(AssistantTurn::new(&content_of(message), calls))
}
