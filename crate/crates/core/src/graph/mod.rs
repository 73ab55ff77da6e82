//! Weighted graphs over agents, maximum spanning trees, node depth and
//! ensemble composition.

mod connectivity;
mod tree;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use connectivity::{
    build_graph, ccf, hybrid_weight, pcf, per_sample_graph, per_sample_weight, GraphParams,
};
pub use tree::{
    default_root, ensemble_members, k_maximum_spanning_trees, maximum_spanning_tree, node_depth,
    SpanningTree,
};

use crate::knowledge::KbError;
use crate::spec::SpecError;
use crate::textio::FormatError;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("records cover different sample sets ({left} vs {right} samples)")]
    SampleSetMismatch { left: usize, right: usize },
    #[error("length mismatch: {left} vs {right}")]
    Length { left: usize, right: usize },
    #[error("parameter {name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("need at least 2 agents to build a graph, got {0}")]
    TooFewAgents(usize),
    #[error("graph is disconnected; components: {components:?}")]
    Disconnected { components: Vec<Vec<usize>> },
    #[error("node {node} out of range for {n} nodes")]
    NodeRange { node: usize, n: usize },
    #[error("unknown connectivity mode {0:?}")]
    UnknownMode(String),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Which connectivity function weights the edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConnectivityMode {
    /// Count of matching spec traits.
    Ccf,
    /// Count of training samples on which two agents agree.
    Pcf,
    /// Range-normalized CCF plus range-normalized PCF.
    Hybrid,
    /// Gaussian kernel on the outputs for one sample.
    PerSample,
}

impl ConnectivityMode {
    pub fn name(self) -> &'static str {
        match self {
            ConnectivityMode::Ccf => "CCF",
            ConnectivityMode::Pcf => "PCF",
            ConnectivityMode::Hybrid => "HYBRID",
            ConnectivityMode::PerSample => "PER_SAMPLE",
        }
    }
}

impl fmt::Display for ConnectivityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConnectivityMode {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "CCF" => Ok(ConnectivityMode::Ccf),
            "PCF" => Ok(ConnectivityMode::Pcf),
            "HYBRID" => Ok(ConnectivityMode::Hybrid),
            "PER_SAMPLE" => Ok(ConnectivityMode::PerSample),
            _ => Err(GraphError::UnknownMode(s.to_string())),
        }
    }
}

/// Undirected weighted edge with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

impl Edge {
    /// Normalizes endpoint order.
    pub fn new(a: usize, b: usize, weight: f64) -> Self {
        let (i, j) = if a <= b { (a, b) } else { (b, a) };
        Edge { i, j, weight }
    }
}

/// Graph of models: nodes are agents, an edge exists iff its weight is
/// nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub n: usize,
    pub edges: Vec<Edge>,
    pub mode: ConnectivityMode,
}

impl ModelGraph {
    /// Builds a graph from candidate edges, dropping zero weights and
    /// self-edges and keeping the last weight given for a repeated pair.
    pub fn new(
        n: usize,
        candidates: impl IntoIterator<Item = Edge>,
        mode: ConnectivityMode,
    ) -> Result<Self, GraphError> {
        let mut edges: Vec<Edge> = Vec::new();
        for e in candidates {
            let e = Edge::new(e.i, e.j, e.weight);
            if e.j >= n {
                return Err(GraphError::NodeRange { node: e.j, n });
            }
            if e.i == e.j || e.weight == 0.0 {
                continue;
            }
            match edges.iter_mut().find(|x| x.i == e.i && x.j == e.j) {
                Some(x) => x.weight = e.weight,
                None => edges.push(e),
            }
        }
        edges.sort_by_key(|e| (e.i, e.j));
        Ok(ModelGraph { n, edges, mode })
    }

    /// `LGRAD-G v1 <n> <mode>` header then `<i> <j> <weight>` lines.
    pub fn to_text(&self) -> String {
        edge_list_text(self.n, self.mode, &self.edges)
    }

    pub fn from_text(text: &str) -> Result<Self, GraphError> {
        let (n, mode, edges) = parse_edge_list(text)?;
        ModelGraph::new(n, edges, mode)
    }
}

pub(crate) fn edge_list_text(n: usize, mode: ConnectivityMode, edges: &[Edge]) -> String {
    let mut out = format!("LGRAD-G v1 {n} {mode}\n");
    for e in edges {
        out.push_str(&format!("{} {} {}\n", e.i, e.j, e.weight));
    }
    out
}

pub(crate) fn parse_edge_list(
    text: &str,
) -> Result<(usize, ConnectivityMode, Vec<Edge>), GraphError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| FormatError::parse(1, "missing header"))?;
    let parts: Vec<&str> = header.split_ascii_whitespace().collect();
    if parts.len() != 4 || parts[0] != "LGRAD-G" || parts[1] != "v1" {
        return Err(FormatError::parse(1, format!("bad header {header:?}")).into());
    }
    let n: usize = parts[2]
        .parse()
        .map_err(|_| FormatError::parse(1, "bad node count"))?;
    let mode: ConnectivityMode = parts[3].parse()?;
    let mut edges = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_ascii_whitespace().collect();
        let bad = || FormatError::parse(idx + 1, format!("bad edge line {line:?}"));
        if f.len() != 3 {
            return Err(bad().into());
        }
        let i: usize = f[0].parse().map_err(|_| bad())?;
        let j: usize = f[1].parse().map_err(|_| bad())?;
        let weight: f64 = f[2].parse().map_err(|_| bad())?;
        edges.push(Edge::new(i, j, weight));
    }
    Ok((n, mode, edges))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_and_self_edges_are_dropped() {
        let g = ModelGraph::new(
            3,
            [
                Edge::new(0, 1, 1.0),
                Edge::new(2, 0, 0.0),
                Edge::new(1, 1, 5.0),
                Edge::new(2, 1, 0.5),
            ],
            ConnectivityMode::Ccf,
        )
        .unwrap();
        assert_eq!(g.edges, vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 0.5)]);
    }

    #[test]
    fn edge_list_round_trip() {
        let g = ModelGraph::new(
            4,
            [
                Edge::new(0, 1, 0.1),
                Edge::new(1, 3, 2.5),
                Edge::new(0, 2, 1e-17),
            ],
            ConnectivityMode::Hybrid,
        )
        .unwrap();
        let text = g.to_text();
        assert!(text.starts_with("LGRAD-G v1 4 HYBRID\n"));
        assert_eq!(ModelGraph::from_text(&text).unwrap(), g);
    }

    #[test]
    fn out_of_range_node_is_rejected() {
        assert!(ModelGraph::new(2, [Edge::new(0, 2, 1.0)], ConnectivityMode::Ccf).is_err());
    }
}
