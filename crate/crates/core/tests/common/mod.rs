#![allow(dead_code)]

use tasksynth::diversity::{GraphNode, ToolCallGraph};
use tasksynth::tools::ToolPrimitive;

/// Graph over `n` nodes with the given primitives (`true` = Retrieval).
pub fn graph(prims: &[bool], edges: &[(usize, usize)]) -> ToolCallGraph {
    let nodes = prims
        .iter()
        .enumerate()
        .map(|(i, r)| GraphNode {
            call_id: format!("c{i}"),
            tool_name: if *r { format!("ret{i}") } else { format!("proc{i}") },
            primitive: if *r { ToolPrimitive::Retrieval } else { ToolPrimitive::Processing },
        })
        .collect();
    ToolCallGraph::new(nodes, edges.iter().copied()).unwrap()
}

/// Every order-respecting edge set over `n` nodes.
pub fn all_edge_sets(n: usize) -> Vec<Vec<(usize, usize)>> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    (0u32..1 << pairs.len())
        .map(|mask| pairs.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, p)| *p).collect())
        .collect()
}

/// Brute-force reference classifier working from an adjacency matrix.
pub struct Oracle {
    n: usize,
    adj: Vec<Vec<bool>>,
}

impl Oracle {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![vec![false; n]; n];
        for &(a, b) in edges {
            adj[a][b] = true;
        }
        Oracle { n, adj }
    }

    /// Every directed path, as node lists.
    fn paths(&self) -> Vec<Vec<usize>> {
        fn walk(o: &Oracle, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            out.push(path.clone());
            let last = *path.last().unwrap();
            for next in 0..o.n {
                if o.adj[last][next] {
                    path.push(next);
                    walk(o, path, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        for s in 0..self.n {
            walk(self, &mut vec![s], &mut out);
        }
        out
    }

    pub fn depth(&self) -> usize {
        self.paths().iter().map(Vec::len).max().unwrap()
    }

    /// Layer of v = nodes on the longest path ending at v.
    pub fn width(&self) -> usize {
        let paths = self.paths();
        let layers: Vec<usize> = (0..self.n)
            .map(|v| paths.iter().filter(|p| *p.last().unwrap() == v).map(Vec::len).max().unwrap())
            .collect();
        (1..=self.n).map(|l| layers.iter().filter(|x| **x == l).count()).max().unwrap()
    }

    pub fn structure(&self) -> &'static str {
        let n = self.n;
        let indeg = |v: usize| (0..n).filter(|u| self.adj[*u][v]).count();
        let outdeg = |v: usize| (0..n).filter(|w| self.adj[v][*w]).count();
        let e: usize = (0..n).map(outdeg).sum();
        let max_in = (0..n).map(indeg).max().unwrap();
        let max_out = (0..n).map(outdeg).max().unwrap();
        let sources = (0..n).filter(|v| indeg(*v) == 0).count();
        let sinks = (0..n).filter(|v| outdeg(*v) == 0).count();
        let rules: [(&str, bool); 6] = [
            ("Single", n == 1),
            ("Indep", n > 1 && e == 0),
            ("Phain", e + 1 == n && max_in <= 1 && max_out <= 1),
            ("Fork", sources == 1 && sinks > 1 && max_in <= 1),
            ("Join", sinks == 1 && sources > 1 && max_out <= 1),
            ("DAG", max_in > 1 && max_out > 1),
        ];
        rules.iter().find(|(_, hit)| *hit).map_or("Mix", |(name, _)| name)
    }

    pub fn class_name(&self, prims: &[bool]) -> String {
        let rp = if prims.iter().all(|r| *r) {
            "PureR"
        } else if prims.iter().all(|r| !*r) {
            "PureP"
        } else {
            "R+P"
        };
        let bin = |x: usize, table: &[(usize, usize, &'static str)]| {
            table.iter().find(|(lo, hi, _)| (*lo..=*hi).contains(&x)).unwrap().2
        };
        let d = bin(self.depth(), &[(1, 2, "d1-2"), (3, 4, "d3-4"), (5, 7, "d5-7"), (8, usize::MAX, "d8+")]);
        let w = bin(self.width(), &[(1, 2, "w1-2"), (3, 5, "w3-5"), (6, 10, "w6-10"), (11, usize::MAX, "w11+")]);
        let nb = || {
            bin(
                self.n,
                &[(2, 3, "n2-3"), (4, 6, "n4-6"), (7, 10, "n7-10"), (11, 20, "n11-20"), (21, usize::MAX, "n21+")],
            )
        };
        match self.structure() {
            "Single" => format!("{rp}/Single"),
            "Indep" => format!("{rp}/Indep/{}", nb()),
            "Phain" => format!("{rp}/Phain/{d}"),
            s => format!("{rp}/{s}/{d}/{w}"),
        }
    }
}
