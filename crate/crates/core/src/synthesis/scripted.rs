//! Deterministic collector and generator policies. They read the rendered
//! prompts and tool results like a model would, so whole synthesis runs can
//! execute offline against builtin mock tools.

use serde_json::{json, Value};

use super::prompts::render_derivation_output;
use super::DerivedTask;
use crate::policy::scripted::{first_user_text, stable_hash, Script};
use crate::policy::{AssistantTurn, ChatMessage, PolicyError, Role, ToolDecl};
use crate::tools::ToolCall;

/// Identifier-like tokens in a tool payload: alphanumeric runs of at least
/// six characters that contain a digit.
pub fn observation_tokens(text: &str) -> Vec<&str> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| t.len() >= 6 && t.chars().any(|c| c.is_ascii_digit()))
        .collect()
}

fn quoted(text: &str) -> Option<&str> {
    let start = text.find('"')? + 1;
    let len = text[start..].find('"')?;
    Some(&text[start..start + len])
}

fn shorten(s: &str, max: usize) -> String {
    let mut out: String = s.chars().take(max).collect();
    if out.len() < s.len() {
        out.push_str("...");
    }
    out
}

/// Explores the declared toolset for a hashed number of calls in
/// `[min_calls, max_calls]`, threading identifiers from earlier results
/// into later arguments, then finishes.
#[derive(Debug, Clone, Copy)]
pub struct ScriptedCollector {
    pub seed: u64,
    pub min_calls: usize,
    pub max_calls: usize,
}

impl Default for ScriptedCollector {
    fn default() -> Self {
        ScriptedCollector {
            seed: 0,
            min_calls: 2,
            max_calls: 5,
        }
    }
}

impl ScriptedCollector {
    fn argument(&self, ty: &str, h: u64, subject: &str, observations: &[&str]) -> Value {
        match ty {
            "integer" => json!((h >> 32) % 10 + 1),
            "number" => json!(((h >> 32) % 1000) as f64 / 10.0),
            "boolean" => json!(h & 1 == 0),
            "array" => json!([]),
            "object" => json!({}),
            _ => {
                let source = match (h >> 8) % 4 {
                    0 => None,
                    3 if !observations.is_empty() => Some(observations[((h >> 16) as usize) % observations.len()]),
                    _ => observations.last().copied(),
                };
                let tokens = source.map(observation_tokens).unwrap_or_default();
                if tokens.is_empty() {
                    json!(subject)
                } else {
                    json!(tokens[((h >> 24) as usize) % tokens.len()])
                }
            }
        }
    }
}

impl Script for ScriptedCollector {
    fn respond(&self, messages: &[ChatMessage], tools: &[ToolDecl], sample_seed: u64) -> Result<AssistantTurn, PolicyError> {
        let prompt = first_user_text(messages);
        let subject = quoted(prompt).unwrap_or_else(|| prompt.lines().next().unwrap_or_default());
        let observations: Vec<&str> = messages
            .iter()
            .filter(|m| m.role == Role::ToolResult)
            .map(|m| m.content.as_str())
            .collect();
        let done = observations.len();
        let span = (self.max_calls.max(self.min_calls) - self.min_calls + 1) as u64;
        let target = self.min_calls + (stable_hash(&[prompt], self.seed ^ sample_seed) % span) as usize;
        if done >= target || tools.is_empty() {
            return Ok(AssistantTurn::finish(&format!(
                "Collected {done} observations about \"{subject}\"."
            )));
        }
        let conv = stable_hash(&[prompt], self.seed) & 0xff_ffff;
        let h = stable_hash(&[prompt, &done.to_string()], self.seed ^ sample_seed);
        let batch = if h.is_multiple_of(5) && done + 2 <= target { 2 } else { 1 };
        let calls: Vec<ToolCall> = (0..batch)
            .map(|j| {
                let hj = stable_hash(&[prompt, &done.to_string(), &j.to_string()], self.seed ^ sample_seed);
                let tool = &tools[(hj % tools.len() as u64) as usize];
                let args: serde_json::Map<String, Value> = tool
                    .required_params()
                    .into_iter()
                    .enumerate()
                    .map(|(p, (name, ty))| {
                        let hp = hj.rotate_left(p as u32 * 7);
                        (name, self.argument(&ty, hp, subject, &observations))
                    })
                    .collect();
                ToolCall {
                    call_id: format!("c{conv:06x}-{}", done + j + 1),
                    tool_name: tool.name.clone(),
                    arguments: args,
                }
            })
            .collect();
        let names: Vec<&str> = calls.iter().map(|c| c.tool_name.as_str()).collect();
        Ok(AssistantTurn::new(
            &format!("Step {}: consulting {}.", done + 1, names.join(", ")),
            calls,
        ))
    }
}

/// Derives a task from one line of the evidence digest in the prompt:
/// the answer is an identifier (or the raw value) that tool returned.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedGenerator {
    pub seed: u64,
}

impl Script for ScriptedGenerator {
    fn respond(&self, messages: &[ChatMessage], _: &[ToolDecl], sample_seed: u64) -> Result<AssistantTurn, PolicyError> {
        let prompt = first_user_text(messages);
        let evolved = prompt.contains("EVOLVED_QUERY:");
        let subject = prompt
            .lines()
            .find_map(|l| l.strip_prefix("Seed: ").or_else(|| l.strip_prefix("Current: ")))
            .unwrap_or_default();
        let digest = prompt
            .split_once("Evidence collected: ")
            .map(|(_, rest)| {
                let end = ["\n\nDerive", "\n\nRefine"]
                    .iter()
                    .filter_map(|m| rest.find(m))
                    .min()
                    .unwrap_or(rest.len());
                &rest[..end]
            })
            .unwrap_or_default();
        let lines: Vec<(&str, &str)> = digest
            .lines()
            .filter_map(|l| l.split_once(" → "))
            .collect();
        if lines.is_empty() {
            return Ok(AssistantTurn::finish("The evidence is insufficient to derive a task."));
        }
        let h = stable_hash(&[prompt], self.seed ^ sample_seed) as usize;
        // Later rounds lean on the newest half of the evidence.
        let lo = if evolved { lines.len() / 2 } else { 0 };
        let (call, payload) = lines[lo + h % (lines.len() - lo)];
        let tool = call.split('(').next().unwrap_or(call);
        let tokens = observation_tokens(payload);
        let answer = if tokens.is_empty() {
            shorten(payload.trim(), 40)
        } else {
            tokens[(h >> 8) % tokens.len()].to_string()
        };
        let short = shorten(subject, 80);
        let task = if evolved {
            DerivedTask {
                round: 2,
                query: format!(
                    "After researching \"{short}\" further, which identifier does {tool} report for the linked record?"
                ),
                answer,
                reasoning: format!("Adds a hop through {tool}; its output reads {}", shorten(payload, 80)),
            }
        } else {
            DerivedTask {
                round: 1,
                query: format!("Which identifier does {tool} report when researching \"{short}\"?"),
                answer,
                reasoning: format!("{tool} returned {}", shorten(payload, 80)),
            }
        };
        Ok(AssistantTurn::finish(&render_derivation_output(&task)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_need_length_and_digit() {
        assert_eq!(observation_tokens(r#"{"id":"ID3F2A11B0","q":"aspirin","n":"ref0a1b2c"}"#), vec!["ID3F2A11B0", "ref0a1b2c"]);
    }

    #[test]
    fn collector_finishes_within_bounds() {
        let c = ScriptedCollector { seed: 1, min_calls: 2, max_calls: 3 };
        let tools = vec![ToolDecl { name: "t".into(), description: String::new(), parameters: json!({"type":"object","properties":{"query":{"type":"string"}},"required":["query"]}) }];
        let mut msgs = vec![ChatMessage::user("Research \"x\" in General domain.")];
        let mut calls = 0;
        loop {
            let turn = c.respond(&msgs, &tools, 0).unwrap();
            msgs.push(ChatMessage::from(&turn));
            if turn.finished {
                break;
            }
            for call in &turn.tool_calls {
                let q = call.arguments["query"].as_str().unwrap();
                assert!(q == "x" || q == "ID00112233", "{q}");
                msgs.push(ChatMessage::tool_result(&call.call_id, "{\"id\":\"ID00112233\"}"));
                calls += 1;
            }
        }
        assert!((2..=3).contains(&calls));
    }

    #[test]
    fn generator_output_parses() {
        let prompt = crate::synthesis::prompts::render_derivation_prompt(1, &[], "aspirin", "lookup({\"q\":\"aspirin\"}) → {\"id\":\"ID00AA11BB\"}").unwrap();
        let turn = ScriptedGenerator::default().respond(&[ChatMessage::user(&prompt)], &[], 0).unwrap();
        let task = crate::synthesis::parse_derivation_output(&turn.reasoning_text, 1).unwrap();
        assert_eq!(task.answer, "ID00AA11BB");
        assert!(task.query.contains("lookup"));
    }
}
