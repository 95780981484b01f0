//! Scripted solvers for offline dataset runs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError};
use crate::policy::scripted::{first_user_text, stable_hash, Script};
use crate::policy::{AssistantTurn, ChatMessage, PolicyError, Role, ToolDecl};
use crate::synthesis::SynthesizedTask;
use crate::tools::ToolCall;

/// How a known query is solved: calls to replay, then the answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKeyEntry {
    pub query: String,
    pub answer: String,
    #[serde(default)]
    pub calls: Vec<ToolCall>,
}

impl From<&SynthesizedTask> for AnswerKeyEntry {
    fn from(t: &SynthesizedTask) -> Self {
        AnswerKeyEntry {
            query: t.query.clone(),
            answer: t.answer.clone(),
            calls: t.evidence.items().iter().map(|e| e.action.clone()).collect(),
        }
    }
}

/// Teacher that replays a known solution path, one call per turn, then
/// states the answer. Unknown queries get a refusal. With `success_seeds`
/// set, only those sample seeds answer correctly.
#[derive(Debug, Clone, Default)]
pub struct AnswerKey {
    entries: BTreeMap<String, AnswerKeyEntry>,
    success_seeds: Option<Vec<u64>>,
}

pub const UNKNOWN_ANSWER: &str = "I could not determine the answer.";

impl AnswerKey {
    pub fn new(entries: impl IntoIterator<Item = AnswerKeyEntry>) -> Self {
        AnswerKey {
            entries: entries.into_iter().map(|e| (e.query.clone(), e)).collect(),
            success_seeds: None,
        }
    }

    pub fn from_tasks<'a>(tasks: impl IntoIterator<Item = &'a SynthesizedTask>) -> Self {
        AnswerKey::new(tasks.into_iter().map(AnswerKeyEntry::from))
    }

    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        Ok(AnswerKey::new(jsonl::read_file::<AnswerKeyEntry>(path)?))
    }

    pub fn succeeding_on(mut self, seeds: Vec<u64>) -> Self {
        self.success_seeds = Some(seeds);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Script for AnswerKey {
    fn respond(&self, messages: &[ChatMessage], _: &[ToolDecl], sample_seed: u64) -> Result<AssistantTurn, PolicyError> {
        let Some(entry) = self.entries.get(first_user_text(messages)) else {
            return Ok(AssistantTurn::finish(UNKNOWN_ANSWER));
        };
        let done = messages.iter().filter(|m| m.role == Role::ToolResult).count();
        if let Some(call) = entry.calls.get(done) {
            return Ok(AssistantTurn::new("Checking the source.", vec![call.clone()]));
        }
        let lucky = self.success_seeds.as_ref().is_none_or(|s| s.contains(&sample_seed));
        Ok(AssistantTurn::finish(if lucky { &entry.answer } else { UNKNOWN_ANSWER }))
    }
}

/// Imperfect solver: each query gets a hashed skill level in `0..=8`, and a
/// rollout with sample seed `s` succeeds when a per-(query, s) hash falls
/// below it. Failed rollouts replay the path but give up at the end.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub key: AnswerKey,
    pub seed: u64,
}

impl Sampler {
    pub fn succeeds(&self, query: &str, sample_seed: u64) -> bool {
        let skill = stable_hash(&[query], self.seed) % 9;
        stable_hash(&[query, &sample_seed.to_string()], self.seed) % 8 < skill
    }
}

impl Script for Sampler {
    fn respond(&self, messages: &[ChatMessage], tools: &[ToolDecl], sample_seed: u64) -> Result<AssistantTurn, PolicyError> {
        let turn = self.key.respond(messages, tools, sample_seed)?;
        if turn.finished && !self.succeeds(first_user_text(messages), sample_seed) {
            return Ok(AssistantTurn::finish(UNKNOWN_ANSWER));
        }
        Ok(turn)
    }
}
