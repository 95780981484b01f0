//! SFT and RL dataset construction from synthesized tasks.
//!
//! SFT: a teacher re-solves each task with its toolset and the trajectory
//! is kept only if the final answer verifies against the reference. RL:
//! k self-sampled rollouts estimate learnability and only frontier tasks
//! (neither always failed nor always solved) are kept.

pub mod teacher;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::{self, JsonlError};
use crate::par::{self, Execution};
use crate::policy::{ChatMessage, PolicyEndpoint};
use crate::synthesis::{run_tool_loop, LoopLimits, RolloutTrace, SynthesizedTask};
use crate::tools::{CallLimits, Registry};
use crate::verification::{cross_verify_with, Verdict, Verifier};

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_K_RL: usize = 8;
pub const DEFAULT_TURN_CAP: usize = 16;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("attempt count must be at least 1")]
    NoAttempts,
    #[error("k_rl must be at least 1")]
    NoRollouts,
    #[error("invalid frontier range [{lo}, {hi}] for k_rl = {k_rl}")]
    InvalidRange { lo: usize, hi: usize, k_rl: usize },
    #[error(transparent)]
    Export(#[from] JsonlError),
}

/// How a model answer is matched against the reference.
#[derive(Clone, Copy)]
pub enum AnswerCheck<'a> {
    Single(&'a dyn Verifier),
    /// Both verifiers must return Correct.
    Cross([&'a dyn Verifier; 2]),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub correct: bool,
    pub verdicts: Vec<Verdict>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl AnswerCheck<'_> {
    /// A missing or blank answer is incorrect without consulting a verifier.
    pub fn check(&self, query: &str, reference: &str, answer: Option<&str>) -> CheckOutcome {
        let Some(answer) = answer.filter(|a| !a.trim().is_empty()) else {
            return CheckOutcome {
                diagnostics: vec!["no final answer".into()],
                ..CheckOutcome::default()
            };
        };
        match self {
            AnswerCheck::Single(v) => match v.judge(query, reference, answer) {
                Ok(verdict) => CheckOutcome {
                    correct: verdict.is_correct(),
                    verdicts: vec![verdict],
                    diagnostics: vec![],
                },
                Err(e) => CheckOutcome {
                    diagnostics: vec![format!("{}: {e}", v.id())],
                    ..CheckOutcome::default()
                },
            },
            // Task-level work is already parallel; judge sequentially.
            AnswerCheck::Cross(pair) => {
                let cv = cross_verify_with(Execution::Sequential, query, reference, answer, *pair);
                CheckOutcome {
                    correct: cv.agreed,
                    verdicts: cv.verdicts.into_iter().flatten().collect(),
                    diagnostics: cv.diagnostics,
                }
            }
        }
    }
}

/// One rollout of `endpoint` on a task: the query as the sole user message,
/// tools restricted to the task's toolset.
pub fn solve(
    task: &SynthesizedTask,
    endpoint: &PolicyEndpoint,
    registry: &Registry,
    turn_cap: usize,
    call_limits: &CallLimits,
    sample_seed: u64,
) -> Result<crate::synthesis::Rollout, crate::policy::PolicyError> {
    let limits = LoopLimits { call_limits: *call_limits, ..LoopLimits::turns(turn_cap) };
    run_tool_loop(endpoint, registry, &task.toolset, vec![ChatMessage::user(&task.query)], &limits, sample_seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionOptions {
    pub attempts: usize,
    pub turn_cap: usize,
    #[serde(skip)]
    pub call_limits: CallLimits,
}

impl Default for RejectionOptions {
    fn default() -> Self {
        RejectionOptions {
            attempts: 1,
            turn_cap: DEFAULT_TURN_CAP,
            call_limits: CallLimits::default(),
        }
    }
}

/// A verified teacher trajectory; one SFT record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptedTrajectory {
    pub cycle_id: String,
    pub query: String,
    pub answer: String,
    pub toolset: Vec<String>,
    /// 1-based attempt that succeeded.
    pub attempt: usize,
    pub model_answer: String,
    pub verdicts: Vec<Verdict>,
    pub messages: Vec<ChatMessage>,
    pub trace: RolloutTrace,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub cycle_id: String,
    pub attempts: usize,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SftOutcome {
    Accepted(Box<AcceptedTrajectory>),
    Rejected(Rejection),
}

/// Up to `opts.attempts` teacher rollouts; the first verified-correct one
/// is accepted. Endpoint errors count as failed attempts.
pub fn rollout_and_reject(
    task: &SynthesizedTask,
    teacher: &PolicyEndpoint,
    check: AnswerCheck<'_>,
    registry: &Registry,
    opts: &RejectionOptions,
) -> Result<SftOutcome, DatasetError> {
    if opts.attempts == 0 {
        return Err(DatasetError::NoAttempts);
    }
    let mut reasons = Vec::new();
    for attempt in 1..=opts.attempts {
        let rollout = match solve(task, teacher, registry, opts.turn_cap, &opts.call_limits, attempt as u64) {
            Ok(r) => r,
            Err(e) => {
                reasons.push(format!("attempt {attempt}: {e}"));
                continue;
            }
        };
        let outcome = check.check(&task.query, &task.answer, rollout.final_answer());
        if outcome.correct {
            return Ok(SftOutcome::Accepted(Box::new(AcceptedTrajectory {
                cycle_id: task.cycle_id.clone(),
                query: task.query.clone(),
                answer: task.answer.clone(),
                toolset: task.toolset.clone(),
                attempt,
                model_answer: rollout.final_answer().unwrap_or_default().to_string(),
                verdicts: outcome.verdicts,
                messages: rollout.messages,
                trace: rollout.trace,
            })));
        }
        let why = if outcome.diagnostics.is_empty() {
            "answer not verified".to_string()
        } else {
            outcome.diagnostics.join("; ")
        };
        reasons.push(format!("attempt {attempt}: {why}"));
    }
    Ok(SftOutcome::Rejected(Rejection {
        cycle_id: task.cycle_id.clone(),
        attempts: opts.attempts,
        reasons,
    }))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SftBuild {
    pub accepted: Vec<AcceptedTrajectory>,
    pub rejected: Vec<Rejection>,
}

/// Rejection sampling over many tasks; output keeps input order.
pub fn build_sft(
    exec: Execution,
    tasks: &[SynthesizedTask],
    teacher: &PolicyEndpoint,
    check: AnswerCheck<'_>,
    registry: &Registry,
    opts: &RejectionOptions,
) -> Result<SftBuild, DatasetError> {
    if opts.attempts == 0 {
        return Err(DatasetError::NoAttempts);
    }
    let outcomes = par::map_ordered(exec, tasks, |t| rollout_and_reject(t, teacher, check, registry, opts));
    let mut build = SftBuild::default();
    for o in outcomes {
        match o? {
            SftOutcome::Accepted(a) => build.accepted.push(*a),
            SftOutcome::Rejected(r) => build.rejected.push(r),
        }
    }
    Ok(build)
}

/// Re-verifies every record; returns the cycle ids that fail.
pub fn audit_sft(records: &[AcceptedTrajectory], check: AnswerCheck<'_>) -> Vec<String> {
    records
        .iter()
        .filter(|r| !check.check(&r.query, &r.answer, Some(&r.model_answer)).correct)
        .map(|r| r.cycle_id.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontierRange {
    pub lo: usize,
    pub hi: usize,
}

impl Default for FrontierRange {
    fn default() -> Self {
        FrontierRange { lo: 1, hi: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnabilityEstimate {
    pub cycle_id: String,
    pub successes: usize,
    pub k_rl: usize,
}

/// Runs `k_rl` independent rollouts (sample seeds 1..=k_rl) and counts
/// verified-correct answers. Failed rollouts count as failures.
pub fn estimate_learnability(
    exec: Execution,
    task: &SynthesizedTask,
    policy: &PolicyEndpoint,
    check: AnswerCheck<'_>,
    registry: &Registry,
    k_rl: usize,
    turn_cap: usize,
) -> Result<LearnabilityEstimate, DatasetError> {
    if k_rl == 0 {
        return Err(DatasetError::NoRollouts);
    }
    let wins = par::map_range(exec, k_rl, |i| {
        solve(task, policy, registry, turn_cap, &CallLimits::default(), i as u64 + 1)
            .map(|r| check.check(&task.query, &task.answer, r.final_answer()).correct)
            .unwrap_or(false)
    });
    Ok(LearnabilityEstimate {
        cycle_id: task.cycle_id.clone(),
        successes: wins.into_iter().filter(|w| *w).count(),
        k_rl,
    })
}

/// Keeps estimates with `lo <= successes <= hi`, in input order. Requires
/// `lo >= 1` and `hi < k_rl` for every estimate so that all-fail and
/// all-pass tasks are always excluded.
pub fn filter_frontier(
    estimates: &[LearnabilityEstimate],
    range: FrontierRange,
) -> Result<Vec<LearnabilityEstimate>, DatasetError> {
    let FrontierRange { lo, hi } = range;
    let bad = |k_rl| DatasetError::InvalidRange { lo, hi, k_rl };
    if lo < 1 || hi < lo {
        return Err(bad(estimates.first().map_or(0, |e| e.k_rl)));
    }
    if let Some(e) = estimates.iter().find(|e| hi >= e.k_rl) {
        return Err(bad(e.k_rl));
    }
    Ok(estimates
        .iter()
        .filter(|e| (lo..=hi).contains(&e.successes))
        .cloned()
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reward {
    pub r_format: f64,
    pub r_correct: f64,
    pub alpha: f64,
    pub total: f64,
}

impl Reward {
    pub fn new(r_format: f64, r_correct: f64, alpha: f64) -> Self {
        Reward {
            r_format,
            r_correct,
            alpha,
            total: alpha * r_format + r_correct,
        }
    }
}

/// Indices of calls in `trace` that are outside `toolset` or fail schema
/// validation.
pub fn invalid_calls(trace: &RolloutTrace, toolset: &[String], registry: &Registry) -> Vec<usize> {
    trace
        .calls()
        .enumerate()
        .filter(|(_, (c, _))| !toolset.contains(&c.tool_name) || registry.check_call(c).is_err())
        .map(|(i, _)| i)
        .collect()
}

/// `r_format` is -1 if any call is invalid, else 0; `r_correct` is 1 only
/// for a verified-correct final answer.
pub fn compute_reward(
    trace: &RolloutTrace,
    task: &SynthesizedTask,
    registry: &Registry,
    check: AnswerCheck<'_>,
    alpha: f64,
) -> Reward {
    let r_format = if invalid_calls(trace, &task.toolset, registry).is_empty() { 0.0 } else { -1.0 };
    let correct = check.check(&task.query, &task.answer, trace.final_answer()).correct;
    Reward::new(r_format, if correct { 1.0 } else { 0.0 }, alpha)
}

/// An RL training record: query, reference answer, toolset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RlRecord {
    pub cycle_id: String,
    pub query: String,
    pub answer: String,
    pub toolset: Vec<String>,
}

impl From<&SynthesizedTask> for RlRecord {
    fn from(t: &SynthesizedTask) -> Self {
        RlRecord {
            cycle_id: t.cycle_id.clone(),
            query: t.query.clone(),
            answer: t.answer.clone(),
            toolset: t.toolset.clone(),
        }
    }
}

/// Tasks whose estimate survived `filter_frontier`, in task order.
pub fn select_rl(tasks: &[SynthesizedTask], kept: &[LearnabilityEstimate]) -> Vec<RlRecord> {
    let ids: std::collections::HashSet<&str> = kept.iter().map(|e| e.cycle_id.as_str()).collect();
    tasks.iter().filter(|t| ids.contains(t.cycle_id.as_str())).map(RlRecord::from).collect()
}

pub fn export_sft(records: &[AcceptedTrajectory], path: &Path) -> Result<(), DatasetError> {
    Ok(jsonl::write_file(path, records)?)
}

pub fn export_rl(records: &[RlRecord], path: &Path) -> Result<(), DatasetError> {
    Ok(jsonl::write_file(path, records)?)
}
