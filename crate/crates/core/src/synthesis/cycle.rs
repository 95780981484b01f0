use serde::{Deserialize, Serialize};

use super::grammar::MissingField;
use super::prompts::{
    evidence_digest, parse_derivation_output, render_collection_prompt, render_derivation_prompt, PromptError,
};
use super::rollout::{run_tool_loop, LoopLimits};
use super::{ConfigRef, DerivedTask, EvidenceItem, EvidenceSet, RolloutTrace, SynthesizedTask};
use crate::policy::{ChatMessage, PolicyEndpoint, PolicyError};
use crate::pools::{derive_seed, Exemplar, SynthesisConfig};
use crate::tools::{CallLimits, Registry};

/// Why a round could not complete.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RoundFailure {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("derivation output unusable: {0}")]
    Derivation(#[from] MissingField),
    #[error("generator emitted tool calls instead of a task")]
    GeneratorCalledTools,
    #[error("round {0} ended with no evidence")]
    NoEvidence(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cycle {cycle_id} aborted in round {round} after {attempts} attempt(s): {failure}")]
pub struct CycleError {
    pub cycle_id: String,
    pub round: usize,
    pub attempts: usize,
    pub failure: RoundFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleOptions {
    /// Collection/derivation rounds K.
    pub rounds: usize,
    /// Tool calls per collection round.
    pub max_steps: usize,
    /// Extra attempts per failed round before the cycle is dropped.
    pub retries: usize,
    #[serde(skip)]
    pub call_limits: CallLimits,
}

impl Default for CycleOptions {
    fn default() -> Self {
        CycleOptions {
            rounds: 3,
            max_steps: 6,
            retries: 1,
            call_limits: CallLimits::default(),
        }
    }
}

pub struct CycleEndpoints<'a> {
    pub collector: &'a PolicyEndpoint,
    pub generator: &'a PolicyEndpoint,
}

/// One collection round: E_k = E_{k-1} followed by the Ok pairs of a
/// fresh rollout over the config's toolset.
#[allow(clippy::too_many_arguments)]
pub fn collect_evidence(
    config: &SynthesisConfig,
    round: usize,
    query: &str,
    previous: &EvidenceSet,
    collector: &PolicyEndpoint,
    registry: &Registry,
    max_steps: usize,
    call_limits: &CallLimits,
    sample_seed: u64,
) -> Result<(EvidenceSet, RolloutTrace), RoundFailure> {
    let digest = (round > 1).then(|| evidence_digest(previous));
    let prompt = render_collection_prompt(round, query, config.seed.domain, digest.as_deref(), max_steps)?;
    let limits = LoopLimits {
        call_limits: *call_limits,
        ..LoopLimits::calls(max_steps)
    };
    let rollout = run_tool_loop(
        collector,
        registry,
        &config.toolset,
        vec![ChatMessage::user(&prompt)],
        &limits,
        sample_seed,
    )?;
    let mut evidence = previous.clone();
    for (step, (action, observation)) in rollout.trace.calls().enumerate() {
        evidence.push(EvidenceItem {
            action: action.clone(),
            observation: observation.clone(),
            round,
            step: step + 1,
        });
    }
    Ok((evidence, rollout.trace))
}

/// One derivation round over the evidence gathered so far.
pub fn derive_task(
    round: usize,
    exemplars: &[Exemplar],
    subject: &str,
    evidence: &EvidenceSet,
    generator: &PolicyEndpoint,
    sample_seed: u64,
) -> Result<DerivedTask, RoundFailure> {
    let prompt = render_derivation_prompt(round, exemplars, subject, &evidence_digest(evidence))?;
    let turn = generator.complete(&[ChatMessage::user(&prompt)], &[], sample_seed)?;
    if !turn.finished {
        return Err(RoundFailure::GeneratorCalledTools);
    }
    Ok(parse_derivation_output(&turn.reasoning_text, round)?)
}

#[allow(clippy::too_many_arguments)]
fn run_round(
    config: &SynthesisConfig,
    round: usize,
    query: &str,
    evidence: &EvidenceSet,
    endpoints: &CycleEndpoints<'_>,
    registry: &Registry,
    opts: &CycleOptions,
    sample_seed: u64,
) -> Result<(EvidenceSet, RolloutTrace, DerivedTask), RoundFailure> {
    let (next, trace) = collect_evidence(
        config,
        round,
        query,
        evidence,
        endpoints.collector,
        registry,
        opts.max_steps,
        &opts.call_limits,
        sample_seed,
    )?;
    if next.is_empty() {
        return Err(RoundFailure::NoEvidence(round));
    }
    let task = derive_task(round, &config.exemplars, query, &next, endpoints.generator, sample_seed)?;
    Ok((next, trace, task))
}

/// Runs K rounds for one configuration. Either every round succeeds and a
/// complete task is returned, or the cycle fails as a whole.
pub fn run_cycle(
    config: &SynthesisConfig,
    endpoints: &CycleEndpoints<'_>,
    registry: &Registry,
    opts: &CycleOptions,
) -> Result<SynthesizedTask, CycleError> {
    if opts.rounds == 0 {
        return Err(CycleError {
            cycle_id: config.cycle_id.clone(),
            round: 0,
            attempts: 0,
            failure: RoundFailure::Prompt(PromptError::InvalidRound),
        });
    }
    let mut query = config.seed.text.clone();
    let mut evidence = EvidenceSet::default();
    let mut traces = Vec::with_capacity(opts.rounds);
    let mut history = Vec::with_capacity(opts.rounds);
    for round in 1..=opts.rounds {
        let mut attempt = 0;
        let (next, trace, task) = loop {
            let sample_seed = derive_seed(config.rng_seed, (round * 64 + attempt) as u64);
            match run_round(config, round, &query, &evidence, endpoints, registry, opts, sample_seed) {
                Ok(done) => break done,
                Err(failure) if attempt < opts.retries => {
                    tracing::warn!(cycle = %config.cycle_id, round, attempt, "round failed, retrying: {failure}");
                    attempt += 1;
                }
                Err(failure) => {
                    return Err(CycleError {
                        cycle_id: config.cycle_id.clone(),
                        round,
                        attempts: attempt + 1,
                        failure,
                    })
                }
            }
        };
        evidence = next;
        traces.push(trace);
        query = task.query.clone();
        history.push(task);
    }
    let last = history.last().expect("at least one round");
    let (stats, tool_usage) = SynthesizedTask::stats_for(&config.toolset, &traces);
    Ok(SynthesizedTask {
        cycle_id: config.cycle_id.clone(),
        domain: config.seed.domain,
        query: last.query.clone(),
        answer: last.answer.clone(),
        toolset: config.toolset.clone(),
        config: ConfigRef {
            rng_seed: config.rng_seed,
            seed: config.seed.clone(),
            exemplars: config.exemplars.clone(),
        },
        history,
        evidence,
        rounds: traces,
        stats,
        tool_usage,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayReport {
    pub checked: usize,
    /// `(evidence index, stored payload, replayed payload)`.
    pub mismatches: Vec<(usize, String, String)>,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-executes every evidence action and compares status and payload
/// byte-for-byte with what was stored.
pub fn replay_evidence(task: &SynthesizedTask, registry: &Registry, limits: &CallLimits) -> ReplayReport {
    let mut report = ReplayReport::default();
    for (i, item) in task.evidence.items().iter().enumerate() {
        let obs = registry.execute(&item.action, limits);
        report.checked += 1;
        if obs.status != item.observation.status || obs.payload != item.observation.payload {
            report.mismatches.push((i, item.observation.payload.clone(), obs.payload));
        }
    }
    report
}

