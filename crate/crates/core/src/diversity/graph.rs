use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::synthesis::RolloutTrace;
use crate::tools::{Observation, Registry, ToolCall, ToolPrimitive};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub call_id: String,
    pub tool_name: String,
    pub primitive: ToolPrimitive,
}

/// Dependency graph over the successful calls of a trajectory. Edges are
/// `(from, to)` node indices with `from < to`, sorted and unique.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCallGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("tool `{0}` is not in the registry")]
    UnknownTool(String),
    #[error("invalid edge set: {0}")]
    InvalidEdgeSet(String),
    #[error("edge judge failed: {0}")]
    Judge(String),
    #[error("graph has no nodes")]
    EmptyGraph,
}

impl ToolCallGraph {
    /// Validates and normalizes (sorts, dedups) the edge list.
    pub fn new(nodes: Vec<GraphNode>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= nodes.len() || b >= nodes.len() {
                return Err(GraphError::InvalidEdgeSet(format!("edge {a}->{b} references a missing node")));
            }
            if a == b {
                return Err(GraphError::InvalidEdgeSet(format!("self-edge on `{}`", nodes[a].call_id)));
            }
            if a > b {
                return Err(GraphError::InvalidEdgeSet(format!(
                    "edge `{}` -> `{}` points backwards in time",
                    nodes[a].call_id, nodes[b].call_id
                )));
            }
            set.insert((a, b));
        }
        Ok(ToolCallGraph { nodes, edges: set.into_iter().collect() })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Edges as call-id pairs.
    pub fn id_edges(&self) -> Vec<(&str, &str)> {
        self.edges
            .iter()
            .map(|&(a, b)| (self.nodes[a].call_id.as_str(), self.nodes[b].call_id.as_str()))
            .collect()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        for &(_, b) in &self.edges {
            d[b] += 1;
        }
        d
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        for &(a, _) in &self.edges {
            d[a] += 1;
        }
        d
    }

    fn canonical_with(&self, label: impl Fn(&GraphNode) -> &str) -> String {
        let labels: Vec<&str> = self.nodes.iter().map(label).collect();
        let edges: Vec<String> = self.edges.iter().map(|(a, b)| format!("{a}>{b}")).collect();
        format!("{}|{}", labels.join(","), edges.join(","))
    }

    /// Tool names in call order plus positional edges; call ids do not
    /// appear.
    pub fn canonical(&self) -> String {
        self.canonical_with(|n| n.tool_name.as_str())
    }

    /// Like `canonical` with each tool replaced by its primitive.
    pub fn canonical_rp(&self) -> String {
        self.canonical_with(|n| match n.primitive {
            ToolPrimitive::Retrieval => "R",
            ToolPrimitive::Processing => "P",
        })
    }
}

const STOPWORDS: &[&str] = &[
    "about", "after", "also", "been", "before", "data", "false", "from", "have", "into", "more", "name", "none",
    "null", "only", "other", "over", "query", "related", "result", "results", "score", "some", "source", "than",
    "that", "their", "them", "then", "there", "these", "they", "this", "tool", "true", "type", "upper", "value",
    "were", "what", "when", "where", "which", "with", "would", "length", "digest",
];

/// Lowercased alphanumeric runs of length >= 4 that are not stopwords.
pub fn flow_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 4)
        .map(str::to_lowercase)
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

fn argument_text(v: &Value, out: &mut String) {
    match v {
        Value::String(s) => {
            out.push_str(s);
            out.push(' ');
        }
        Value::Array(a) => a.iter().for_each(|x| argument_text(x, out)),
        Value::Object(m) => m.values().for_each(|x| argument_text(x, out)),
        Value::Null => {}
        other => {
            out.push_str(&other.to_string());
            out.push(' ');
        }
    }
}

pub fn argument_tokens(call: &ToolCall) -> BTreeSet<String> {
    let mut text = String::new();
    for v in call.arguments.values() {
        argument_text(v, &mut text);
    }
    flow_tokens(&text)
}

/// Proposes dependency edges for a list of successful calls, as call-id
/// pairs `(from, to)`.
pub trait EdgeJudge: Send + Sync {
    fn edges(&self, calls: &[(&ToolCall, &Observation)]) -> Result<Vec<(String, String)>, String>;
}

#[derive(Clone, Copy)]
pub enum EdgeMode<'a> {
    /// Token flow: i -> j when a token produced by call i (present in its
    /// payload but not its own arguments) appears in j's arguments.
    Heuristic,
    External(&'a dyn EdgeJudge),
}

/// Builds the call graph over the Ok calls of `trace`.
pub fn build_call_graph(trace: &RolloutTrace, registry: &Registry, mode: EdgeMode<'_>) -> Result<ToolCallGraph, GraphError> {
    let calls: Vec<(&ToolCall, &Observation)> = trace.calls().filter(|(_, o)| o.is_ok()).collect();
    let nodes = calls
        .iter()
        .map(|(c, _)| {
            let spec = registry.get(&c.tool_name).ok_or_else(|| GraphError::UnknownTool(c.tool_name.clone()))?;
            Ok(GraphNode {
                call_id: c.call_id.clone(),
                tool_name: c.tool_name.clone(),
                primitive: spec.primitive,
            })
        })
        .collect::<Result<Vec<_>, GraphError>>()?;

    match mode {
        EdgeMode::Heuristic => {
            let args: Vec<BTreeSet<String>> = calls.iter().map(|(c, _)| argument_tokens(c)).collect();
            let produced: Vec<BTreeSet<String>> = calls
                .iter()
                .zip(&args)
                .map(|((_, o), a)| flow_tokens(&o.payload).difference(a).cloned().collect())
                .collect();
            let edges = (0..calls.len())
                .flat_map(|j| (0..j).map(move |i| (i, j)))
                .filter(|&(i, j)| !produced[i].is_disjoint(&args[j]));
            ToolCallGraph::new(nodes, edges)
        }
        EdgeMode::External(judge) => {
            let proposed = judge.edges(&calls).map_err(GraphError::Judge)?;
            let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.call_id.as_str(), i)).collect();
            let resolve = |id: &str| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| GraphError::InvalidEdgeSet(format!("unknown call id `{id}`")))
            };
            let edges = proposed
                .iter()
                .map(|(a, b)| Ok((resolve(a)?, resolve(b)?)))
                .collect::<Result<Vec<_>, GraphError>>()?;
            ToolCallGraph::new(nodes, edges)
        }
    }
}

/// Tool names in execution order, failed calls included.
pub fn extract_sequence(trace: &RolloutTrace) -> Vec<String> {
    trace.calls().map(|(c, _)| c.tool_name.clone()).collect()
}

/// Edge judge backed by a chat policy. The reply lists one
/// `EDGE: <from> -> <to>` line per dependency.
pub struct PolicyEdgeJudge {
    pub endpoint: crate::policy::PolicyEndpoint,
}

pub fn render_edge_prompt(calls: &[(&ToolCall, &Observation)]) -> String {
    let mut out = String::from(
        "Identify data dependencies between the tool calls below. A call depends on an earlier call \
         when its arguments use information returned by that call.\n\n",
    );
    for (c, o) in calls {
        let payload: String = o.payload.chars().take(2048).collect::<String>().replace('\n', " ");
        out.push_str(&format!("[{}] {} → {}\n", c.call_id, c.render(), payload));
    }
    out.push_str("\nList one dependency per line as:\nEDGE: <earlier call id> -> <later call id>\nWrite NONE if the calls are independent.");
    out
}

pub fn parse_edge_lines(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| {
            let body = l.trim().strip_prefix("EDGE:")?;
            let (a, b) = body.split_once("->")?;
            Some((a.trim().to_string(), b.trim().to_string()))
        })
        .collect()
}

impl EdgeJudge for PolicyEdgeJudge {
    fn edges(&self, calls: &[(&ToolCall, &Observation)]) -> Result<Vec<(String, String)>, String> {
        if calls.len() < 2 {
            return Ok(Vec::new());
        }
        let prompt = render_edge_prompt(calls);
        let turn = self
            .endpoint
            .complete(&[crate::policy::ChatMessage::user(&prompt)], &[], 0)
            .map_err(|e| e.to_string())?;
        Ok(parse_edge_lines(&turn.reasoning_text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_lines_parse() {
        let got = parse_edge_lines("Reasoning first.\nEDGE: c1 -> c3\n  EDGE: c2->c3\nNONE");
        assert_eq!(got, [("c1".to_string(), "c3".to_string()), ("c2".into(), "c3".into())]);
    }
}
