use std::sync::Arc;

use serde_json::json;
use tasksynth::demo;
use tasksynth::policy::scripted::Sequence;
use tasksynth::policy::{AssistantTurn, PolicyEndpoint, PolicyError};
use tasksynth::pools::{sample_config, ConfigBounds, ExemplarPool, SeedConcept, SeedPool, SynthesisConfig};
use tasksynth::synthesis::scripted::{ScriptedCollector, ScriptedGenerator};
use tasksynth::synthesis::{
    collect_evidence, render_derivation_output, replay_evidence, run_cycle, synthesize, CycleEndpoints,
    CycleOptions, DerivedTask, EvidenceSet, RoundFailure, SynthesisRun, TaskStore,
};
use tasksynth::tools::{
    Backend, CallLimits, ObservationStatus, ParamType, ParameterSpec, Registry, ToolCall, ToolPrimitive, ToolSpec,
};
use tasksynth::Domain;

fn registry() -> Registry {
    let mut reg = Registry::new();
    reg.register_tool(
        ToolSpec::new("mock_add", Domain::General, ToolPrimitive::Processing, Backend::builtin("mock_add"))
            .with_param(ParameterSpec::required("a", ParamType::Number))
            .with_param(ParameterSpec::required("b", ParamType::Number)),
    )
    .unwrap();
    reg.register_tool(
        ToolSpec::new("lookup", Domain::Medical, ToolPrimitive::Retrieval, Backend::builtin("mock_lookup"))
            .with_param(ParameterSpec::required("query", ParamType::String)),
    )
    .unwrap();
    reg.register_tool(
        ToolSpec::new("outside", Domain::Medical, ToolPrimitive::Retrieval, Backend::builtin("mock_lookup"))
            .with_param(ParameterSpec::required("query", ParamType::String)),
    )
    .unwrap();
    reg
}

fn config() -> SynthesisConfig {
    SynthesisConfig {
        cycle_id: "cycle-000001".into(),
        rng_seed: 11,
        seed: SeedConcept { text: "Erlotinib".into(), domain: Domain::Medical, source: "t".into() },
        toolset: vec!["lookup".into(), "mock_add".into()],
        exemplars: vec![],
    }
}

fn add(id: &str, a: i64, b: i64) -> ToolCall {
    ToolCall::new(id, "mock_add", json!({"a": a, "b": b}))
}

fn collector(turns: Vec<AssistantTurn>) -> PolicyEndpoint {
    PolicyEndpoint::scripted("collector", Arc::new(Sequence::new(turns)))
}

fn derivation(round: usize, q: &str, a: &str) -> AssistantTurn {
    AssistantTurn::finish(&render_derivation_output(&DerivedTask {
        round,
        query: q.into(),
        answer: a.into(),
        reasoning: "because".into(),
    }))
}

fn collect(ep: &PolicyEndpoint, max_steps: usize) -> (EvidenceSet, tasksynth::synthesis::RolloutTrace) {
    collect_evidence(&config(), 1, "Erlotinib", &EvidenceSet::default(), ep, &registry(), max_steps, &CallLimits::default(), 0)
        .unwrap()
}

#[test]
fn two_ok_calls_grow_evidence_by_two() {
    let ep = collector(vec![
        AssistantTurn::new("a", vec![add("c1", 1, 2)]),
        AssistantTurn::new("b", vec![add("c2", 3, 4)]),
        AssistantTurn::finish("done"),
    ]);
    let (e, trace) = collect(&ep, 6);
    assert_eq!(e.len(), 2);
    assert_eq!(trace.budget_used, 2);
    assert!(!trace.truncated);
    assert_eq!(e.items()[1].observation.payload, "7");
    assert_eq!((e.items()[1].round, e.items()[1].step), (1, 2));
}

#[test]
fn failed_calls_stay_out_of_evidence() {
    let ep = collector(vec![
        AssistantTurn::new("a", vec![add("c1", 1, 2), ToolCall::new("c2", "mock_add", json!({"a": 1}))]),
        AssistantTurn::finish("done"),
    ]);
    let (e, trace) = collect(&ep, 6);
    assert_eq!(e.len(), 1);
    assert_eq!(trace.calls().count(), 2);
    assert_eq!(trace.calls().nth(1).unwrap().1.status, ObservationStatus::ToolError);
}

#[test]
fn step_budget_truncates_rollout() {
    let turns = (0..7).map(|i| AssistantTurn::new("go", vec![add(&format!("c{i}"), i, 1)])).collect();
    let (e, trace) = collect(&collector(turns), 6);
    assert_eq!(trace.budget_used, 6);
    assert!(trace.truncated);
    assert_eq!(e.len(), 6);
}

#[test]
fn calls_outside_toolset_are_refused() {
    let ep = collector(vec![
        AssistantTurn::new("a", vec![ToolCall::new("c1", "outside", json!({"query": "x"}))]),
        AssistantTurn::finish("done"),
    ]);
    let (e, trace) = collect(&ep, 6);
    assert!(e.is_empty());
    let obs = trace.calls().next().unwrap().1;
    assert_eq!(obs.status, ObservationStatus::ToolError);
    assert!(obs.payload.contains("not available"));
}

fn single_round_collector() -> PolicyEndpoint {
    // Each round's conversation: one call, then finish.
    PolicyEndpoint::scripted(
        "collector",
        Arc::new(|msgs: &[tasksynth::policy::ChatMessage], _: &[tasksynth::policy::ToolDecl], _: u64| {
            let done = msgs.iter().any(|m| m.role == tasksynth::policy::Role::ToolResult);
            Ok::<_, PolicyError>(if done {
                AssistantTurn::finish("ok")
            } else {
                AssistantTurn::new("look", vec![ToolCall::new("c1", "lookup", json!({"query": msgs[0].content.len().to_string()}))])
            })
        }),
    )
}

#[test]
fn single_round_task_equals_derivation() {
    let gen = PolicyEndpoint::scripted("gen", Arc::new(Sequence::new(vec![derivation(1, "q1", "a1")])));
    let c = single_round_collector();
    let opts = CycleOptions { rounds: 1, ..CycleOptions::default() };
    let task = run_cycle(&config(), &CycleEndpoints { collector: &c, generator: &gen }, &registry(), &opts).unwrap();
    assert_eq!((task.query.as_str(), task.answer.as_str()), ("q1", "a1"));
    assert_eq!(task.history.len(), 1);
    assert!(task.audit().is_empty(), "{:?}", task.audit());
}

#[test]
fn three_rounds_carry_history() {
    let per_round = |msgs: &[tasksynth::policy::ChatMessage], _: &[tasksynth::policy::ToolDecl], _: u64| {
        let p = &msgs[0].content;
        Ok::<_, PolicyError>(if p.contains("Seed: Erlotinib") {
            derivation(1, "q1", "a1")
        } else if p.contains("Current: q1") {
            derivation(2, "q2", "a2")
        } else {
            derivation(3, "q3", "a3")
        })
    };
    let gen = PolicyEndpoint::scripted("gen", Arc::new(per_round));
    let c = single_round_collector();
    let task = run_cycle(&config(), &CycleEndpoints { collector: &c, generator: &gen }, &registry(), &CycleOptions::default()).unwrap();
    assert_eq!(task.history.len(), 3);
    assert_eq!(task.history.iter().map(|d| d.query.as_str()).collect::<Vec<_>>(), ["q1", "q2", "q3"]);
    assert_eq!((task.query.as_str(), task.answer.as_str()), ("q3", "a3"));
    assert_eq!(task.evidence.len(), 3);
    assert!(task.audit().is_empty(), "{:?}", task.audit());
    assert!(replay_evidence(&task, &registry(), &CallLimits::default()).is_exact());
    assert_eq!(task.stats.available, 2);
    assert_eq!(task.stats.unique, 1);
    assert_eq!(task.tool_usage.iter().filter(|u| u.used).count(), 1);
}

#[test]
fn round_two_abort_yields_cycle_error() {
    let c = PolicyEndpoint::scripted(
        "collector",
        Arc::new(|msgs: &[tasksynth::policy::ChatMessage], _: &[tasksynth::policy::ToolDecl], _: u64| {
            if msgs[0].content.starts_with("Continue research") {
                return Err(PolicyError::Transport("connection reset".into()));
            }
            let done = msgs.len() > 1;
            Ok(if done {
                AssistantTurn::finish("ok")
            } else {
                AssistantTurn::new("", vec![ToolCall::new("c1", "mock_add", json!({"a": 1, "b": 1}))])
            })
        }),
    );
    let gen = PolicyEndpoint::scripted("gen", Arc::new(Sequence::new(vec![derivation(1, "q1", "a1")])));
    let err = run_cycle(&config(), &CycleEndpoints { collector: &c, generator: &gen }, &registry(), &CycleOptions::default())
        .unwrap_err();
    assert_eq!(err.cycle_id, "cycle-000001");
    assert_eq!(err.round, 2);
    assert_eq!(err.attempts, 2);
    assert!(matches!(err.failure, RoundFailure::Policy(PolicyError::Transport(_))));
}

#[test]
fn malformed_derivation_fails_round() {
    let gen = PolicyEndpoint::scripted("gen", Arc::new(Sequence::new(vec![AssistantTurn::finish("QUERY: q"), AssistantTurn::finish("QUERY: q")])));
    let c = single_round_collector();
    let opts = CycleOptions { rounds: 1, retries: 0, ..CycleOptions::default() };
    let err = run_cycle(&config(), &CycleEndpoints { collector: &c, generator: &gen }, &registry(), &opts).unwrap_err();
    assert!(matches!(err.failure, RoundFailure::Derivation(_)));
}

fn demo_run_parts() -> (Registry, SeedPool, ExemplarPool) {
    (
        Registry::from_manifest(demo::manifest(24, 5)).unwrap(),
        SeedPool::from_seeds(demo::seeds(20)).unwrap(),
        ExemplarPool::from_exemplars(demo::exemplars(12)).unwrap(),
    )
}

#[test]
fn scripted_cycles_are_deterministic_and_grounded() {
    let (reg, seeds, ex) = demo_run_parts();
    let c = PolicyEndpoint::scripted("c", Arc::new(ScriptedCollector::default()));
    let g = PolicyEndpoint::scripted("g", Arc::new(ScriptedGenerator::default()));
    let eps = CycleEndpoints { collector: &c, generator: &g };
    for i in 0..20 {
        let cfg = sample_config(&seeds, &ex, &reg, &ConfigBounds::default(), i, &format!("c{i}")).unwrap();
        let a = run_cycle(&cfg, &eps, &reg, &CycleOptions::default()).unwrap();
        let b = run_cycle(&cfg, &eps, &reg, &CycleOptions::default()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.audit().is_empty(), "{:?}", a.audit());
        assert!(replay_evidence(&a, &reg, &CallLimits::default()).is_exact());
        assert_eq!(a.toolset, cfg.toolset);
    }
}

#[test]
fn batch_resumes_without_duplicates() {
    let (reg, seeds, ex) = demo_run_parts();
    let c = PolicyEndpoint::scripted("c", Arc::new(ScriptedCollector::default()));
    let g = PolicyEndpoint::scripted("g", Arc::new(ScriptedGenerator::default()));
    let run = SynthesisRun {
        registry: &reg,
        seeds: &seeds,
        exemplars: &ex,
        bounds: ConfigBounds::default(),
        options: CycleOptions::default(),
        global_seed: 3,
        endpoints: CycleEndpoints { collector: &c, generator: &g },
    };
    let dir = tempfile::tempdir().unwrap();
    let store = TaskStore::open(dir.path()).unwrap();
    let first = synthesize(&run, &store, 2, 1).unwrap();
    assert_eq!(first.synthesized, 2);
    let second = synthesize(&run, &store, 4, 2).unwrap();
    assert_eq!(second.resumed_from, 2);
    assert_eq!(second.synthesized, 2);
    let ids: Vec<String> = store.read_tasks().unwrap().into_iter().map(|t| t.cycle_id).collect();
    assert_eq!(ids, ["cycle-000000", "cycle-000001", "cycle-000002", "cycle-000003"]);

    // A crash between append and cursor update must not duplicate a cycle.
    std::fs::write(store.cursor_path(), "{\"next_cycle\":3}").unwrap();
    let third = synthesize(&run, &store, 4, 1).unwrap();
    assert_eq!((third.synthesized, third.skipped_existing), (0, 1));
    assert_eq!(store.read_tasks().unwrap().len(), 4);
}
