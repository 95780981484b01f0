mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use serde_json::json;
use tasksynth::diversity::{
    all_classes, analyze_corpus, build_call_graph, classify_structure, classify_topology, compute_scale,
    enumerate_classes, extract_sequence, histogram_csv, DiversityReport, EdgeJudge, EdgeMode, GraphError,
    StructureType, TopologyClass, Trajectory,
};
use tasksynth::jsonl;
use tasksynth::par::Execution;
use tasksynth::synthesis::{RolloutTrace, TraceStep};
use tasksynth::tools::{Observation, ObservationStatus, Registry, ToolCall};

use common::{graph, Oracle};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

fn fixture_registry() -> Registry {
    Registry::load(format!("{FIXTURES}/six_traces_manifest.json").as_ref()).unwrap()
}

fn fixture_corpus() -> Vec<Trajectory> {
    jsonl::read_file(format!("{FIXTURES}/six_traces.jsonl").as_ref()).unwrap()
}

fn step(id: &str, tool: &str, args: serde_json::Value, payload: &str, status: ObservationStatus) -> TraceStep {
    TraceStep {
        reasoning: String::new(),
        action: Some(ToolCall::new(id, tool, args)),
        observation: Some(Observation { call_id: id.into(), status, payload: payload.into(), latency: Default::default() }),
    }
}

fn trace(steps: Vec<TraceStep>) -> RolloutTrace {
    RolloutTrace { budget_used: steps.len(), steps, truncated: false }
}

fn ok(id: &str, tool: &str, args: serde_json::Value, payload: &str) -> TraceStep {
    step(id, tool, args, payload, ObservationStatus::Ok)
}

#[test]
fn sequences_follow_execution_order() {
    let t = trace(vec![
        ok("1", "r_search", json!({"q": "a"}), "x"),
        ok("2", "r_fetch", json!({"id": "b"}), "y"),
        ok("3", "r_search", json!({"q": "c"}), "z"),
    ]);
    assert_eq!(extract_sequence(&t), ["r_search", "r_fetch", "r_search"]);
    assert!(extract_sequence(&RolloutTrace::default()).is_empty());
    let six = trace((0..6).map(|i| ok(&i.to_string(), "p_calc", json!({"expr": "1"}), "1")).collect());
    assert_eq!(extract_sequence(&six).len(), 6);
}

#[test]
fn heuristic_edges_follow_token_flow() {
    let reg = fixture_registry();
    let t = trace(vec![
        ok("1", "r_search", json!({"q": "start"}), "id=XYZ9"),
        ok("2", "r_fetch", json!({"id": "XYZ9"}), "payload"),
    ]);
    let g = build_call_graph(&t, &reg, EdgeMode::Heuristic).unwrap();
    assert_eq!(g.id_edges(), [("1", "2")]);

    let t = trace(vec![
        ok("1", "r_search", json!({"q": "alpha"}), "bravo charlie"),
        ok("2", "r_fetch", json!({"id": "delta"}), "echo"),
    ]);
    let g = build_call_graph(&t, &reg, EdgeMode::Heuristic).unwrap();
    assert_eq!((g.len(), g.edges.len()), (2, 0));

    // Echoed arguments do not create edges; failed calls are not nodes.
    let t = trace(vec![
        ok("1", "r_search", json!({"q": "warfarin"}), "warfarin found"),
        step("2", "r_fetch", json!({"id": "found"}), "missing", ObservationStatus::ToolError),
        ok("3", "r_fetch", json!({"id": "warfarin"}), "dose"),
    ]);
    let g = build_call_graph(&t, &reg, EdgeMode::Heuristic).unwrap();
    assert_eq!((g.len(), g.edges.len()), (2, 0));
}

struct Judge(Vec<(&'static str, &'static str)>);

impl EdgeJudge for Judge {
    fn edges(&self, _: &[(&ToolCall, &Observation)]) -> Result<Vec<(String, String)>, String> {
        Ok(self.0.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect())
    }
}

#[test]
fn external_edges_are_validated() {
    let reg = fixture_registry();
    let t = trace((1..=3).map(|i| ok(&format!("c{i}"), "p_calc", json!({"expr": "1"}), "1")).collect());
    let good = Judge(vec![("c1", "c3"), ("c1", "c3")]);
    let g = build_call_graph(&t, &reg, EdgeMode::External(&good)).unwrap();
    assert_eq!(g.id_edges(), [("c1", "c3")]);
    for bad in [Judge(vec![("c3", "c1")]), Judge(vec![("c2", "c2")]), Judge(vec![("c1", "c9")])] {
        assert!(matches!(build_call_graph(&t, &reg, EdgeMode::External(&bad)), Err(GraphError::InvalidEdgeSet(_))));
    }
}

#[test]
fn structure_examples() {
    assert_eq!(classify_structure(&graph(&[true], &[])).unwrap(), StructureType::Single);
    assert_eq!(classify_structure(&graph(&[true; 4], &[])).unwrap(), StructureType::Indep);
    let diamond = graph(&[true; 4], &[(0, 1), (0, 2), (1, 3), (2, 3)]);
    assert_eq!(classify_structure(&diamond).unwrap(), StructureType::Dag);
    assert_eq!(classify_structure(&graph(&[], &[])), Err(GraphError::EmptyGraph));
}

#[test]
fn scale_examples_match_oracle() {
    type Case = (usize, Vec<(usize, usize)>, (usize, usize));
    let cases: [Case; 3] = [
        (3, vec![(0, 1), (1, 2)], (3, 1)),
        (4, vec![(0, 1), (0, 2), (0, 3)], (2, 3)),
        (4, vec![(0, 1), (0, 2), (1, 3), (2, 3)], (3, 2)),
    ];
    for (n, edges, want) in cases {
        let o = Oracle::new(n, &edges);
        assert_eq!((o.depth(), o.width()), want);
        assert_eq!(compute_scale(&graph(&vec![true; n], &edges)).unwrap(), want);
    }
}

#[test]
fn naming_examples() {
    assert_eq!(classify_topology(&graph(&[true], &[])).unwrap().name(), "PureR/Single");
    assert_eq!(classify_topology(&graph(&[false; 3], &[(0, 1), (1, 2)])).unwrap().name(), "PureP/Phain/d3-4");
    assert_eq!(classify_topology(&graph(&[true, false, true, false, true], &[])).unwrap().name(), "R+P/Indep/n4-6");
}

#[test]
fn class_enumeration_counts() {
    let names = enumerate_classes();
    assert_eq!(names.len(), 222);
    let mut sorted = names.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted, names);
    let count = |f: &dyn Fn(&TopologyClass) -> bool| all_classes().iter().filter(|c| f(c)).count();
    let per: BTreeMap<&str, usize> = StructureType::ALL
        .iter()
        .map(|s| (s.label(), count(&|c: &TopologyClass| c.structure == *s)))
        .collect();
    assert_eq!(per["Single"], 3);
    assert_eq!(per["Indep"], 15);
    assert_eq!(per["Phain"], 12);
    for s in ["Fork", "Join", "DAG", "Mix"] {
        assert_eq!(per[s], 48);
    }
    assert_eq!(names.iter().filter(|n| n.starts_with("PureR/")).count(), 74);
    for name in &names {
        let c: TopologyClass = name.parse().unwrap();
        assert_eq!(&c.name(), name);
    }
    assert!("R+P/Phain/d3-4/w1-2".parse::<TopologyClass>().is_err());
    assert!("PureR/Indep/d1-2".parse::<TopologyClass>().is_err());
}

#[test]
fn six_trace_fixture_report() {
    let expected: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{FIXTURES}/six_traces_expected.json")).unwrap()).unwrap();
    let want: DiversityReport = serde_json::from_value(expected["report"].clone()).unwrap();
    let corpus = fixture_corpus();
    let reg = fixture_registry();
    for exec in [Execution::Sequential, Execution::Parallel] {
        let out = analyze_corpus(exec, &corpus, &reg, EdgeMode::Heuristic).unwrap();
        assert_eq!(out.report, want);
        for t in &out.traces {
            assert_eq!(t.class.unwrap().name(), expected["classes"][&t.id].as_str().unwrap(), "{}", t.id);
            let edges: Vec<(String, String)> = serde_json::from_value(expected["edges"][&t.id].clone()).unwrap();
            let got: Vec<(String, String)> =
                t.graph.as_ref().unwrap().id_edges().into_iter().map(|(a, b)| (a.into(), b.into())).collect();
            assert_eq!(got, edges, "{}", t.id);
        }
        let csv = histogram_csv(&out.histogram);
        assert_eq!(csv.lines().count(), 223);
        assert!(csv.contains("\nPureR/Phain/d1-2,2\n"));
    }
    let text = analyze_corpus(Execution::Parallel, &corpus, &reg, EdgeMode::Heuristic).unwrap().report.to_text();
    assert!(text.contains("R/P topology classes covered   5 / 222"));
    assert!(text.contains("Avg. tool calls per task       2.50"));
}

#[test]
fn small_corpus_examples() {
    let reg = fixture_registry();
    let one = Trajectory {
        id: "a".into(),
        toolset: vec!["r_search".into(), "p_calc".into()],
        trace: trace(vec![ok("1", "r_search", json!({"q": "x"}), "y"), ok("2", "p_calc", json!({"expr": "z"}), "w")]),
    };
    let r = analyze_corpus(Execution::Parallel, std::slice::from_ref(&one), &reg, EdgeMode::Heuristic).unwrap().report;
    assert_eq!((r.tools_covered, r.unique_sequences), (2, 1));

    let mut relabeled = one.clone();
    relabeled.id = "b".into();
    for s in &mut relabeled.trace.steps {
        if let (Some(a), Some(o)) = (&mut s.action, &mut s.observation) {
            a.call_id = format!("other-{}", a.call_id);
            o.call_id = a.call_id.clone();
        }
    }
    let r = analyze_corpus(Execution::Parallel, &[one, relabeled], &reg, EdgeMode::Heuristic).unwrap().report;
    assert_eq!(r.unique_graphs, 1);
}

proptest! {
    #[test]
    fn relabeling_call_ids_preserves_class(mask in 0u32..1024, prims in proptest::collection::vec(any::<bool>(), 5), salt in "[a-z]{1,6}") {
        let edges: Vec<(usize, usize)> = common::all_edge_sets(5)[mask as usize].clone();
        let g = graph(&prims, &edges);
        let mut h = g.clone();
        for n in &mut h.nodes {
            n.call_id = format!("{salt}{}", n.call_id);
        }
        prop_assert_eq!(classify_topology(&g).unwrap(), classify_topology(&h).unwrap());
        prop_assert_eq!(g.canonical(), h.canonical());
    }
}
