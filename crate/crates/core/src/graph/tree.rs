use std::cmp::Ordering;
use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;

use super::{edge_list_text, ConnectivityMode, Edge, GraphError, ModelGraph};

/// Maximum spanning tree with its dense symmetric adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    pub n: usize,
    pub edges: Vec<Edge>,
    pub adjacency: DMatrix<f64>,
    pub total_weight: f64,
}

impl SpanningTree {
    fn from_edges(n: usize, edges: Vec<Edge>) -> Self {
        let mut adjacency = DMatrix::zeros(n, n);
        for e in &edges {
            adjacency[(e.i, e.j)] = e.weight;
            adjacency[(e.j, e.i)] = e.weight;
        }
        let total_weight = edges.iter().map(|e| e.weight).sum();
        SpanningTree {
            n,
            edges,
            adjacency,
            total_weight,
        }
    }

    pub fn neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.i].push((e.j, e.weight));
            adj[e.j].push((e.i, e.weight));
        }
        adj
    }

    fn edge_keys(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(|e| (e.i, e.j)).collect()
    }

    pub fn to_text(&self, mode: ConnectivityMode) -> String {
        edge_list_text(self.n, mode, &self.edges)
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => self.parent[ra] = rb,
            Ordering::Greater => self.parent[rb] = ra,
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Descending weight, then ascending `(i, j)`.
fn kruskal_order(a: &Edge, b: &Edge) -> Ordering {
    b.weight
        .total_cmp(&a.weight)
        .then_with(|| (a.i, a.j).cmp(&(b.i, b.j)))
}

fn kruskal(n: usize, edges: &[Edge]) -> Result<SpanningTree, GraphError> {
    let mut sorted: Vec<Edge> = edges.to_vec();
    sorted.sort_by(kruskal_order);
    let mut dsu = DisjointSet::new(n);
    let mut chosen = Vec::with_capacity(n.saturating_sub(1));
    for e in sorted {
        if dsu.union(e.i, e.j) {
            chosen.push(e);
            if chosen.len() + 1 == n {
                break;
            }
        }
    }
    if chosen.len() + 1 < n {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut root_of = vec![usize::MAX; n];
        for v in 0..n {
            let r = dsu.find(v);
            if root_of[r] == usize::MAX {
                root_of[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[root_of[r]].push(v);
        }
        return Err(GraphError::Disconnected { components: groups });
    }
    chosen.sort_by_key(|e| (e.i, e.j));
    Ok(SpanningTree::from_edges(n, chosen))
}

/// Kruskal's algorithm on descending weights with lexicographic `(i, j)`
/// tie-breaking. `O(m log m)` for `m` edges.
pub fn maximum_spanning_tree(g: &ModelGraph) -> Result<SpanningTree, GraphError> {
    if g.n == 0 {
        return Err(GraphError::TooFewAgents(0));
    }
    kruskal(g.n, &g.edges)
}

/// The maximum spanning tree followed by up to `k - 1` distinct runner-up
/// trees, each obtained by forbidding one edge of the optimum (lightest
/// edge first). Fewer than `k` trees are returned when the graph admits no
/// further distinct alternatives.
pub fn k_maximum_spanning_trees(g: &ModelGraph, k: usize) -> Result<Vec<SpanningTree>, GraphError> {
    let best = maximum_spanning_tree(g)?;
    let mut trees = vec![best];
    if k <= 1 {
        return Ok(trees);
    }
    let mut removal: Vec<Edge> = trees[0].edges.clone();
    removal.sort_by(|a, b| kruskal_order(b, a));
    let mut seen = vec![trees[0].edge_keys()];
    for banned in removal {
        if trees.len() >= k {
            break;
        }
        let rest: Vec<Edge> = g
            .edges
            .iter()
            .copied()
            .filter(|e| (e.i, e.j) != (banned.i, banned.j))
            .collect();
        if let Ok(t) = kruskal(g.n, &rest) {
            let keys = t.edge_keys();
            if !seen.contains(&keys) {
                seen.push(keys);
                trees.push(t);
            }
        }
    }
    Ok(trees)
}

/// Node with the largest total incident weight; ties go to the smallest
/// index.
pub fn default_root(t: &SpanningTree) -> usize {
    let mut best = 0;
    let mut best_w = f64::NEG_INFINITY;
    for (v, nb) in t.neighbors().iter().enumerate() {
        let w: f64 = nb.iter().map(|(_, w)| w).sum();
        if w > best_w {
            best = v;
            best_w = w;
        }
    }
    best
}

/// Sum of edge weights along the unique path from `root` to every node.
pub fn node_depth(t: &SpanningTree, root: usize) -> Result<Vec<f64>, GraphError> {
    if root >= t.n {
        return Err(GraphError::NodeRange { node: root, n: t.n });
    }
    let adj = t.neighbors();
    let mut depth = vec![f64::NAN; t.n];
    depth[root] = 0.0;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for &(u, w) in &adj[v] {
            if depth[u].is_nan() {
                depth[u] = depth[v] + w;
                queue.push_back(u);
            }
        }
    }
    Ok(depth)
}

/// All tree nodes, minus leaves whose single incident weight falls below
/// `min_incident_weight`. Never returns an empty set: if every node would
/// be pruned, the [`default_root`] is kept.
pub fn ensemble_members(t: &SpanningTree, min_incident_weight: f64) -> BTreeSet<usize> {
    let all: BTreeSet<usize> = (0..t.n).collect();
    if min_incident_weight <= 0.0 {
        return all;
    }
    let adj = t.neighbors();
    let kept: BTreeSet<usize> = all
        .into_iter()
        .filter(|&v| !(adj[v].len() == 1 && adj[v][0].1 < min_incident_weight))
        .collect();
    if kept.is_empty() {
        BTreeSet::from([default_root(t)])
    } else {
        kept
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> ModelGraph {
        ModelGraph::new(
            n,
            edges.iter().map(|&(i, j, w)| Edge::new(i, j, w)),
            ConnectivityMode::Ccf,
        )
        .unwrap()
    }

    fn keys(t: &SpanningTree) -> Vec<(usize, usize)> {
        t.edges.iter().map(|e| (e.i, e.j)).collect()
    }

    #[test]
    fn single_node() {
        let t = maximum_spanning_tree(&graph(1, &[])).unwrap();
        assert!(t.edges.is_empty());
        assert_eq!(t.total_weight, 0.0);
    }

    #[test]
    fn triangle_picks_heaviest_pair() {
        let t = maximum_spanning_tree(&graph(3, &[(0, 1, 3.0), (0, 2, 1.0), (1, 2, 2.0)])).unwrap();
        assert_eq!(keys(&t), vec![(0, 1), (1, 2)]);
        assert_eq!(t.total_weight, 5.0);
        assert_eq!(t.adjacency[(2, 1)], 2.0);
        assert_eq!(t.adjacency[(0, 2)], 0.0);
    }

    #[test]
    fn equal_weights_break_ties_lexicographically() {
        let t = maximum_spanning_tree(&graph(3, &[(1, 2, 2.0), (0, 2, 2.0), (0, 1, 2.0)])).unwrap();
        assert_eq!(keys(&t), vec![(0, 1), (0, 2)]);
        assert_eq!(t.total_weight, 4.0);
    }

    #[test]
    fn disconnected_graph_lists_components() {
        match maximum_spanning_tree(&graph(4, &[(0, 1, 1.0), (2, 3, 1.0)])) {
            Err(GraphError::Disconnected { components }) => {
                assert_eq!(components, vec![vec![0, 1], vec![2, 3]]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn k_trees_are_distinct_and_ordered() {
        let g = graph(
            4,
            &[
                (0, 1, 4.0),
                (0, 2, 3.0),
                (0, 3, 2.0),
                (1, 2, 1.5),
                (2, 3, 1.0),
                (1, 3, 0.5),
            ],
        );
        let trees = k_maximum_spanning_trees(&g, 3).unwrap();
        assert_eq!(trees.len(), 3);
        assert_eq!(trees[0], maximum_spanning_tree(&g).unwrap());
        assert!(trees[1].total_weight <= trees[0].total_weight);
        assert_ne!(keys(&trees[1]), keys(&trees[0]));
        assert_ne!(keys(&trees[2]), keys(&trees[1]));
        assert_eq!(k_maximum_spanning_trees(&g, 1).unwrap().len(), 1);
        // a tree graph has no alternatives
        let path = graph(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        assert_eq!(k_maximum_spanning_trees(&path, 4).unwrap().len(), 1);
    }

    #[test]
    fn depth_on_path_and_star() {
        let t = maximum_spanning_tree(&graph(3, &[(0, 1, 3.0), (1, 2, 2.0)])).unwrap();
        assert_eq!(node_depth(&t, 0).unwrap(), vec![0.0, 3.0, 5.0]);
        assert_eq!(node_depth(&t, 2).unwrap()[2], 0.0);
        assert!(node_depth(&t, 3).is_err());

        let star =
            maximum_spanning_tree(&graph(4, &[(0, 1, 1.5), (0, 2, 0.5), (0, 3, 2.0)])).unwrap();
        assert_eq!(default_root(&star), 0);
        assert_eq!(node_depth(&star, 0).unwrap(), vec![0.0, 1.5, 0.5, 2.0]);
    }

    #[test]
    fn root_ties_go_to_smallest_index() {
        let t = maximum_spanning_tree(&graph(2, &[(0, 1, 1.0)])).unwrap();
        assert_eq!(default_root(&t), 0);
        let t = maximum_spanning_tree(&graph(3, &[(0, 1, 3.0), (1, 2, 2.0)])).unwrap();
        assert_eq!(default_root(&t), 1);
    }

    #[test]
    fn ensemble_pruning() {
        let t = maximum_spanning_tree(&graph(3, &[(0, 1, 3.0), (1, 2, 0.1)])).unwrap();
        assert_eq!(ensemble_members(&t, 0.0), BTreeSet::from([0, 1, 2]));
        assert_eq!(ensemble_members(&t, 0.5), BTreeSet::from([0, 1]));
        assert_eq!(ensemble_members(&t, 10.0), BTreeSet::from([1]));

        let pair = maximum_spanning_tree(&graph(2, &[(0, 1, 1.0)])).unwrap();
        assert_eq!(ensemble_members(&pair, 5.0), BTreeSet::from([0]));
        let single = maximum_spanning_tree(&graph(1, &[])).unwrap();
        assert_eq!(ensemble_members(&single, 5.0), BTreeSet::from([0]));
    }
}
