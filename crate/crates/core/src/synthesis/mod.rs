//! The evidence-collection / task-derivation loop.
//!
//! Each cycle alternates two steps for K rounds: a collector explores the
//! sampled toolset and every successful (call, observation) pair is added
//! to the evidence set; a generator then derives a query/answer pair from
//! that evidence. The derived query seeds the next round's collection.

mod batch;
mod cycle;
pub mod grammar;
pub mod prompts;
mod rollout;
pub mod scripted;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::pools::{Exemplar, SeedConcept};
use crate::tools::{Observation, ToolCall};

pub use batch::{synthesize, BatchError, SynthesisRun, SynthesisSummary, TaskStore};
pub use cycle::{
    collect_evidence, derive_task, replay_evidence, run_cycle, CycleEndpoints, CycleError, CycleOptions,
    ReplayReport, RoundFailure,
};
pub use prompts::{
    evidence_digest, parse_derivation_output, render_collection_prompt, render_derivation_output,
    render_derivation_prompt, PromptError,
};
pub use rollout::{run_tool_loop, LoopLimits, Rollout};

/// A validated (action, observation) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub action: ToolCall,
    pub observation: Observation,
    pub round: usize,
    pub step: usize,
}

/// Append-only evidence accumulated over rounds; empty before round 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvidenceSet {
    items: Vec<EvidenceItem>,
}

impl EvidenceSet {
    pub fn items(&self) -> &[EvidenceItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends an item. Only `Ok` observations are admitted and rounds may
    /// not go backwards.
    pub fn push(&mut self, item: EvidenceItem) -> bool {
        let ordered = self.items.last().is_none_or(|last| last.round <= item.round);
        if item.observation.is_ok() && ordered {
            self.items.push(item);
            true
        } else {
            false
        }
    }

    /// Items gathered in rounds `1..=round`.
    pub fn through_round(&self, round: usize) -> &[EvidenceItem] {
        let end = self.items.partition_point(|i| i.round <= round);
        &self.items[..end]
    }
}

/// One step of a rollout: either a tool call with its observation, or the
/// closing turn (both `action` and `observation` absent).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub reasoning: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Observation>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutTrace {
    pub steps: Vec<TraceStep>,
    /// Tool calls executed.
    pub budget_used: usize,
    /// Stopped by a limit rather than a finished turn.
    pub truncated: bool,
}

impl RolloutTrace {
    /// Executed calls with their observations, in order.
    pub fn calls(&self) -> impl Iterator<Item = (&ToolCall, &Observation)> {
        self.steps
            .iter()
            .filter_map(|s| Some((s.action.as_ref()?, s.observation.as_ref()?)))
    }

    /// Text of the closing turn, if the rollout finished.
    pub fn final_answer(&self) -> Option<&str> {
        match self.steps.last() {
            Some(s) if s.action.is_none() => Some(s.reasoning.as_str()),
            _ => None,
        }
    }
}

/// A query/answer pair derived in one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedTask {
    pub round: usize,
    pub query: String,
    pub answer: String,
    pub reasoning: String,
}

/// The parts of a synthesis configuration kept with a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigRef {
    pub rng_seed: u64,
    pub seed: SeedConcept,
    pub exemplars: Vec<Exemplar>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStats {
    /// Tool calls executed across all rounds.
    pub calls: usize,
    /// Size of the toolset.
    pub available: usize,
    /// Distinct tools among executed calls.
    pub unique: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolUsage {
    pub name: String,
    pub used: bool,
}

/// A synthesized task with full provenance. Field order is the on-disk
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesizedTask {
    pub cycle_id: String,
    pub domain: Domain,
    pub query: String,
    pub answer: String,
    /// The sampled toolset, in sampled order.
    pub toolset: Vec<String>,
    pub config: ConfigRef,
    pub history: Vec<DerivedTask>,
    pub evidence: EvidenceSet,
    pub rounds: Vec<RolloutTrace>,
    pub stats: TaskStats,
    pub tool_usage: Vec<ToolUsage>,
}

impl SynthesizedTask {
    pub(crate) fn stats_for(toolset: &[String], rounds: &[RolloutTrace]) -> (TaskStats, Vec<ToolUsage>) {
        let used: BTreeSet<&str> = rounds
            .iter()
            .flat_map(|r| r.calls().map(|(c, _)| c.tool_name.as_str()))
            .collect();
        let stats = TaskStats {
            calls: rounds.iter().map(|r| r.budget_used).sum(),
            available: toolset.len(),
            unique: used.len(),
        };
        let usage = toolset
            .iter()
            .map(|n| ToolUsage {
                name: n.clone(),
                used: used.contains(n.as_str()),
            })
            .collect();
        (stats, usage)
    }

    /// Structural invariants of a stored task. Returns one message per
    /// violation; empty means the task is sound.
    pub fn audit(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let toolset: BTreeSet<&str> = self.toolset.iter().map(String::as_str).collect();
        for (i, item) in self.evidence.items().iter().enumerate() {
            if !toolset.contains(item.action.tool_name.as_str()) {
                problems.push(format!("evidence {i} uses `{}` outside the toolset", item.action.tool_name));
            }
            if !item.observation.is_ok() {
                problems.push(format!("evidence {i} is not an Ok observation"));
            }
        }
        if self.evidence.items().windows(2).any(|w| w[0].round > w[1].round) {
            problems.push("evidence rounds decrease".into());
        }
        // E_k must equal E_{k-1} followed by the Ok calls of round k.
        let mut offset = 0;
        for (k, trace) in self.rounds.iter().enumerate() {
            let round = k + 1;
            let expected: Vec<(&ToolCall, &Observation)> = trace.calls().filter(|(_, o)| o.is_ok()).collect();
            let prefix = self.evidence.through_round(round);
            if prefix.len() != offset + expected.len() {
                problems.push(format!("round {round}: evidence size {} != {}", prefix.len(), offset + expected.len()));
                break;
            }
            for (item, (call, obs)) in prefix[offset..].iter().zip(&expected) {
                if &item.action != *call || &item.observation != *obs || item.round != round {
                    problems.push(format!("round {round}: evidence diverges from trace at call `{}`", call.call_id));
                }
            }
            offset = prefix.len();
        }
        if offset != self.evidence.len() {
            problems.push("evidence holds items from rounds without traces".into());
        }
        match self.history.last() {
            Some(last) if last.query == self.query && last.answer == self.answer => {}
            _ => problems.push("final query/answer differ from the last derivation".into()),
        }
        if self.history.len() != self.rounds.len() {
            problems.push("derivation history and round traces differ in length".into());
        }
        problems
    }
}
