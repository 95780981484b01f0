use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::graph::{GraphError, ToolCallGraph};
use crate::tools::ToolPrimitive;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RpType {
    PureR,
    RP,
    PureP,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StructureType {
    Single,
    Indep,
    Phain,
    Fork,
    Join,
    #[serde(rename = "DAG")]
    Dag,
    Mix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DepthBin {
    D1To2,
    D3To4,
    D5To7,
    D8Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WidthBin {
    W1To2,
    W3To5,
    W6To10,
    W11Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeBin {
    N2To3,
    N4To6,
    N7To10,
    N11To20,
    N21Plus,
}

macro_rules! labels {
    ($ty:ty { $($v:ident => $s:literal),+ $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$(<$ty>::$v),+];

            pub fn label(self) -> &'static str {
                match self { $(<$ty>::$v => $s),+ }
            }

            fn from_label(s: &str) -> Option<Self> {
                match s { $($s => Some(<$ty>::$v),)+ _ => None }
            }
        }
    };
}

labels!(RpType { PureR => "PureR", RP => "R+P", PureP => "PureP" });
labels!(StructureType {
    Single => "Single", Indep => "Indep", Phain => "Phain", Fork => "Fork",
    Join => "Join", Dag => "DAG", Mix => "Mix",
});
labels!(DepthBin { D1To2 => "d1-2", D3To4 => "d3-4", D5To7 => "d5-7", D8Plus => "d8+" });
labels!(WidthBin { W1To2 => "w1-2", W3To5 => "w3-5", W6To10 => "w6-10", W11Plus => "w11+" });
labels!(NodeBin { N2To3 => "n2-3", N4To6 => "n4-6", N7To10 => "n7-10", N11To20 => "n11-20", N21Plus => "n21+" });

impl DepthBin {
    pub fn of(depth: usize) -> Self {
        match depth {
            0..=2 => DepthBin::D1To2,
            3..=4 => DepthBin::D3To4,
            5..=7 => DepthBin::D5To7,
            _ => DepthBin::D8Plus,
        }
    }
}

impl WidthBin {
    pub fn of(width: usize) -> Self {
        match width {
            0..=2 => WidthBin::W1To2,
            3..=5 => WidthBin::W3To5,
            6..=10 => WidthBin::W6To10,
            _ => WidthBin::W11Plus,
        }
    }
}

impl NodeBin {
    pub fn of(n: usize) -> Self {
        match n {
            0..=3 => NodeBin::N2To3,
            4..=6 => NodeBin::N4To6,
            7..=10 => NodeBin::N7To10,
            11..=20 => NodeBin::N11To20,
            _ => NodeBin::N21Plus,
        }
    }
}

impl StructureType {
    pub fn has_depth(self) -> bool {
        !matches!(self, StructureType::Single | StructureType::Indep)
    }

    pub fn has_width(self) -> bool {
        matches!(self, StructureType::Fork | StructureType::Join | StructureType::Dag | StructureType::Mix)
    }
}

/// First matching structure rule, checked in priority order.
pub fn classify_structure(g: &ToolCallGraph) -> Result<StructureType, GraphError> {
    let n = g.len();
    if n == 0 {
        return Err(GraphError::EmptyGraph);
    }
    let e = g.edges.len();
    let (ins, outs) = (g.in_degrees(), g.out_degrees());
    let max_in = ins.iter().copied().max().unwrap_or(0);
    let max_out = outs.iter().copied().max().unwrap_or(0);
    let sources = ins.iter().filter(|d| **d == 0).count();
    let sinks = outs.iter().filter(|d| **d == 0).count();
    Ok(if n == 1 {
        StructureType::Single
    } else if e == 0 {
        StructureType::Indep
    } else if e == n - 1 && max_in <= 1 && max_out <= 1 {
        StructureType::Phain
    } else if sources == 1 && sinks > 1 && max_in <= 1 {
        StructureType::Fork
    } else if sinks == 1 && sources > 1 && max_out <= 1 {
        StructureType::Join
    } else if max_in > 1 && max_out > 1 {
        StructureType::Dag
    } else {
        StructureType::Mix
    })
}

/// `(depth, width)`: nodes on a longest path, and the largest layer when
/// each node sits one layer below its deepest predecessor.
pub fn compute_scale(g: &ToolCallGraph) -> Result<(usize, usize), GraphError> {
    if g.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    // Edges always point forward, so index order is a topological order.
    let mut layer = vec![1usize; g.len()];
    for &(a, b) in &g.edges {
        layer[b] = layer[b].max(layer[a] + 1);
    }
    let depth = layer.iter().copied().max().unwrap_or(1);
    let mut counts = vec![0usize; depth + 1];
    for l in &layer {
        counts[*l] += 1;
    }
    Ok((depth, counts.into_iter().max().unwrap_or(1)))
}

pub fn rp_type<'a>(primitives: impl IntoIterator<Item = &'a ToolPrimitive>) -> RpType {
    let (mut r, mut p) = (false, false);
    for x in primitives {
        match x {
            ToolPrimitive::Retrieval => r = true,
            ToolPrimitive::Processing => p = true,
        }
    }
    match (r, p) {
        (true, false) => RpType::PureR,
        (false, true) => RpType::PureP,
        _ => RpType::RP,
    }
}

/// One of the 222 R/P topology classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TopologyClass {
    pub rp: RpType,
    pub structure: StructureType,
    pub depth_bin: Option<DepthBin>,
    pub width_bin: Option<WidthBin>,
    pub node_bin: Option<NodeBin>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid topology class name `{0}`")]
pub struct InvalidClassName(pub String);

impl TopologyClass {
    pub fn name(&self) -> String {
        let mut parts = vec![self.rp.label(), self.structure.label()];
        parts.extend(self.node_bin.map(NodeBin::label));
        parts.extend(self.depth_bin.map(DepthBin::label));
        parts.extend(self.width_bin.map(WidthBin::label));
        parts.join("/")
    }

    fn is_well_formed(&self) -> bool {
        self.depth_bin.is_some() == self.structure.has_depth()
            && self.width_bin.is_some() == self.structure.has_width()
            && self.node_bin.is_some() == (self.structure == StructureType::Indep)
    }
}

impl fmt::Display for TopologyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for TopologyClass {
    type Err = InvalidClassName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || InvalidClassName(s.to_string());
        let mut parts = s.split('/');
        let rp = parts.next().and_then(RpType::from_label).ok_or_else(bad)?;
        let structure = parts.next().and_then(StructureType::from_label).ok_or_else(bad)?;
        let rest: Vec<&str> = parts.collect();
        let mut class = TopologyClass { rp, structure, depth_bin: None, width_bin: None, node_bin: None };
        match (structure, rest.as_slice()) {
            (StructureType::Single, []) => {}
            (StructureType::Indep, [n]) => class.node_bin = Some(NodeBin::from_label(n).ok_or_else(bad)?),
            (StructureType::Phain, [d]) => class.depth_bin = Some(DepthBin::from_label(d).ok_or_else(bad)?),
            (_, [d, w]) if structure.has_width() => {
                class.depth_bin = Some(DepthBin::from_label(d).ok_or_else(bad)?);
                class.width_bin = Some(WidthBin::from_label(w).ok_or_else(bad)?);
            }
            _ => return Err(bad()),
        }
        debug_assert!(class.is_well_formed());
        Ok(class)
    }
}

impl Serialize for TopologyClass {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for TopologyClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn classify_topology(g: &ToolCallGraph) -> Result<TopologyClass, GraphError> {
    let structure = classify_structure(g)?;
    let (depth, width) = compute_scale(g)?;
    Ok(TopologyClass {
        rp: rp_type(g.nodes.iter().map(|n| &n.primitive)),
        structure,
        depth_bin: structure.has_depth().then(|| DepthBin::of(depth)),
        width_bin: structure.has_width().then(|| WidthBin::of(width)),
        node_bin: (structure == StructureType::Indep).then(|| NodeBin::of(g.len())),
    })
}

/// Every class, sorted by name.
pub fn all_classes() -> Vec<TopologyClass> {
    let mut out = Vec::new();
    for &rp in RpType::ALL {
        for &structure in StructureType::ALL {
            let base = TopologyClass { rp, structure, depth_bin: None, width_bin: None, node_bin: None };
            match structure {
                StructureType::Single => out.push(base),
                StructureType::Indep => {
                    out.extend(NodeBin::ALL.iter().map(|&n| TopologyClass { node_bin: Some(n), ..base }))
                }
                StructureType::Phain => {
                    out.extend(DepthBin::ALL.iter().map(|&d| TopologyClass { depth_bin: Some(d), ..base }))
                }
                _ => {
                    for &d in DepthBin::ALL {
                        for &w in WidthBin::ALL {
                            out.push(TopologyClass { depth_bin: Some(d), width_bin: Some(w), ..base });
                        }
                    }
                }
            }
        }
    }
    out.sort_by_key(TopologyClass::name);
    out
}

/// Canonical names of all classes, sorted.
pub fn enumerate_classes() -> Vec<String> {
    all_classes().iter().map(TopologyClass::name).collect()
}
