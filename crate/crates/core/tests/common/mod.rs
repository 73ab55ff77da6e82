#![allow(dead_code)]

use lgrad_core::graph::{ConnectivityMode, Edge, ModelGraph};
use lgrad_core::spec::AgentSpec;
use rand::Rng;

/// Best spanning-tree weight by enumerating every (n-1)-edge subset.
pub fn brute_force_max_tree_weight(n: usize, edges: &[(usize, usize, f64)]) -> Option<f64> {
    let m = edges.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != n - 1 {
            continue;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            if p[x] == x {
                x
            } else {
                let r = find(p, p[x]);
                p[x] = r;
                r
            }
        }
        let mut acyclic = true;
        let mut w = 0.0;
        for (k, &(i, j, wt)) in edges.iter().enumerate() {
            if mask & (1 << k) != 0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a == b {
                    acyclic = false;
                    break;
                }
                parent[a] = b;
                w += wt;
            }
        }
        if acyclic && best.is_none_or(|b| w > b) {
            best = Some(w);
        }
    }
    best
}

pub fn graph(n: usize, edges: &[(usize, usize, f64)]) -> ModelGraph {
    ModelGraph::new(
        n,
        edges.iter().map(|&(i, j, w)| Edge::new(i, j, w)),
        ConnectivityMode::Hybrid,
    )
    .unwrap()
}

pub fn random_spec<R: Rng>(rng: &mut R) -> AgentSpec {
    AgentSpec::new(std::array::from_fn(|_| rng.random_bool(0.5)))
}

pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}
