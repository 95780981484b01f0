//! Structural diversity of tool-call trajectories: sequences, dependency
//! graphs, the R/P topology taxonomy, and corpus-level reports.

mod graph;
mod topology;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::AcceptedTrajectory;
use crate::par::{self, Execution};
use crate::synthesis::{RolloutTrace, SynthesizedTask};
use crate::tools::Registry;

pub use graph::{
    argument_tokens, build_call_graph, extract_sequence, flow_tokens, parse_edge_lines, render_edge_prompt, EdgeJudge,
    EdgeMode, GraphError, GraphNode, PolicyEdgeJudge, ToolCallGraph,
};
pub use topology::{
    all_classes, classify_structure, classify_topology, compute_scale, enumerate_classes, rp_type, DepthBin,
    InvalidClassName, NodeBin, RpType, StructureType, TopologyClass, WidthBin,
};

pub const CLASS_COUNT: usize = 222;

/// A trajectory to analyze with the toolset it ran under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub toolset: Vec<String>,
    pub trace: RolloutTrace,
}

impl From<&SynthesizedTask> for Trajectory {
    /// All collection rounds, concatenated.
    fn from(t: &SynthesizedTask) -> Self {
        Trajectory {
            id: t.cycle_id.clone(),
            toolset: t.toolset.clone(),
            trace: RolloutTrace {
                steps: t.rounds.iter().flat_map(|r| r.steps.iter().cloned()).collect(),
                budget_used: t.rounds.iter().map(|r| r.budget_used).sum(),
                truncated: t.rounds.iter().any(|r| r.truncated),
            },
        }
    }
}

impl From<&AcceptedTrajectory> for Trajectory {
    fn from(a: &AcceptedTrajectory) -> Self {
        Trajectory {
            id: a.cycle_id.clone(),
            toolset: a.toolset.clone(),
            trace: a.trace.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceAnalysis {
    pub id: String,
    pub sequence: Vec<String>,
    /// `None` when the trajectory has no successful call.
    pub graph: Option<ToolCallGraph>,
    pub class: Option<TopologyClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub tools_covered: usize,
    pub unique_toolsets: usize,
    pub unique_sequences: usize,
    pub unique_graphs: usize,
    pub unique_topologies: usize,
    pub topology_classes_covered: usize,
    pub avg_calls_per_task: f64,
    pub distinct_tool_types_per_task: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusAnalysis {
    pub report: DiversityReport,
    /// Trajectories per class, every class present.
    pub histogram: BTreeMap<String, usize>,
    pub traces: Vec<TraceAnalysis>,
}

#[derive(Debug, Error)]
#[error("trajectory `{id}`: {source}")]
pub struct DiversityError {
    pub id: String,
    #[source]
    pub source: GraphError,
}

pub fn analyze_trajectory(t: &Trajectory, registry: &Registry, mode: EdgeMode<'_>) -> Result<TraceAnalysis, GraphError> {
    let graph = build_call_graph(&t.trace, registry, mode)?;
    let (graph, class) = if graph.is_empty() {
        (None, None)
    } else {
        let class = classify_topology(&graph)?;
        (Some(graph), Some(class))
    };
    Ok(TraceAnalysis {
        id: t.id.clone(),
        sequence: extract_sequence(&t.trace),
        graph,
        class,
    })
}

/// Per-trajectory analysis runs under `exec`; the merge is sequential in
/// input order, so the result does not depend on the strategy.
pub fn analyze_corpus(
    exec: Execution,
    trajectories: &[Trajectory],
    registry: &Registry,
    mode: EdgeMode<'_>,
) -> Result<CorpusAnalysis, DiversityError> {
    let traces = par::map_ordered(exec, trajectories, |t| {
        analyze_trajectory(t, registry, mode).map_err(|source| DiversityError { id: t.id.clone(), source })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let mut tools = BTreeSet::new();
    let mut toolsets = BTreeSet::new();
    let mut sequences = BTreeSet::new();
    let mut graphs = BTreeSet::new();
    let mut topologies = BTreeSet::new();
    let mut histogram: BTreeMap<String, usize> = enumerate_classes().into_iter().map(|c| (c, 0)).collect();
    let (mut active, mut calls, mut kinds) = (0usize, 0usize, 0usize);

    for (t, a) in trajectories.iter().zip(&traces) {
        toolsets.insert(t.toolset.iter().collect::<BTreeSet<_>>());
        if !a.sequence.is_empty() {
            active += 1;
            calls += a.sequence.len();
            let distinct: BTreeSet<&String> = a.sequence.iter().collect();
            kinds += distinct.len();
            tools.extend(distinct);
            sequences.insert(&a.sequence);
        }
        if let (Some(g), Some(c)) = (&a.graph, &a.class) {
            graphs.insert(g.canonical());
            topologies.insert(g.canonical_rp());
            *histogram.entry(c.name()).or_default() += 1;
        }
    }
    let mean = |total: usize| if active == 0 { 0.0 } else { total as f64 / active as f64 };
    let report = DiversityReport {
        tools_covered: tools.len(),
        unique_toolsets: toolsets.len(),
        unique_sequences: sequences.len(),
        unique_graphs: graphs.len(),
        unique_topologies: topologies.len(),
        topology_classes_covered: histogram.values().filter(|n| **n > 0).count(),
        avg_calls_per_task: mean(calls),
        distinct_tool_types_per_task: mean(kinds),
    };
    Ok(CorpusAnalysis { report, histogram, traces })
}

impl DiversityReport {
    /// Plain-text table, one metric per row.
    pub fn to_text(&self) -> String {
        let rows: [(&str, String); 8] = [
            ("Tools covered", self.tools_covered.to_string()),
            ("Unique toolsets", self.unique_toolsets.to_string()),
            ("Unique tool-call sequences", self.unique_sequences.to_string()),
            ("Unique tool-call graphs", self.unique_graphs.to_string()),
            ("Unique R/P topologies", self.unique_topologies.to_string()),
            ("R/P topology classes covered", format!("{} / {CLASS_COUNT}", self.topology_classes_covered)),
            ("Avg. tool calls per task", format!("{:.2}", self.avg_calls_per_task)),
            ("Distinct tool types per task", format!("{:.2}", self.distinct_tool_types_per_task)),
        ];
        let mut out = String::new();
        for (label, value) in rows {
            let _ = writeln!(out, "{label:<30} {value}");
        }
        out
    }
}

/// `class,count` rows for every class, in name order.
pub fn histogram_csv(histogram: &BTreeMap<String, usize>) -> String {
    let mut out = String::from("class,count\n");
    for (class, n) in histogram {
        let _ = writeln!(out, "{class},{n}");
    }
    out
}
