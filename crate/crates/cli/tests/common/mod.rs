//! Independent oracles shared by the acceptance checks.

#![allow(dead_code)]

use lgrad_core::graph::{maximum_spanning_tree, ConnectivityMode, Edge, ModelGraph, SpanningTree};
use lgrad_core::meta::{evaluate, MetaModel, SampleInputs};
use rand::Rng;

/// Maximum total weight over all spanning trees, by enumerating every
/// `(n-1)`-edge subset and keeping the acyclic ones.
pub fn brute_force_max_tree_weight(n: usize, edges: &[(usize, usize, f64)]) -> Option<f64> {
    let m = edges.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1u32 << m) {
        if mask.count_ones() as usize != n - 1 {
            continue;
        }
        let mut comp: Vec<usize> = (0..n).collect();
        let mut ok = true;
        let mut total = 0.0;
        for (k, &(i, j, w)) in edges.iter().enumerate() {
            if mask & (1 << k) == 0 {
                continue;
            }
            let (ci, cj) = (comp[i], comp[j]);
            if ci == cj {
                ok = false;
                break;
            }
            for c in comp.iter_mut() {
                if *c == cj {
                    *c = ci;
                }
            }
            total += w;
        }
        if ok {
            best = Some(best.map_or(total, |b: f64| b.max(total)));
        }
    }
    best
}

/// Random connected graph: a random spanning path plus extra edges, with
/// weights that are multiples of 1/4 so totals are exact.
pub fn random_connected_graph<R: Rng>(rng: &mut R, n: usize) -> Vec<(usize, usize, f64)> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut present = vec![vec![false; n]; n];
    let mut edges = Vec::new();
    let mut push = |a: usize, b: usize, w: f64, edges: &mut Vec<(usize, usize, f64)>| {
        let (i, j) = (a.min(b), a.max(b));
        if !present[i][j] {
            present[i][j] = true;
            edges.push((i, j, w));
        }
    };
    for w in order.windows(2) {
        let wt = rng.random_range(1..=40) as f64 * 0.25;
        push(w[0], w[1], wt, &mut edges);
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.5) {
                let wt = rng.random_range(1..=40) as f64 * 0.25;
                push(i, j, wt, &mut edges);
            }
        }
    }
    edges
}

pub fn model_graph(n: usize, edges: &[(usize, usize, f64)]) -> ModelGraph {
    ModelGraph::new(
        n,
        edges.iter().map(|&(i, j, w)| Edge::new(i, j, w)),
        ConnectivityMode::Ccf,
    )
    .expect("valid graph")
}

/// Random tree: node `v` attaches to a uniformly chosen earlier node.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize) -> SpanningTree {
    let edges: Vec<(usize, usize, f64)> = (1..n)
        .map(|v| (rng.random_range(0..v), v, rng.random_range(0.05..2.0)))
        .collect();
    maximum_spanning_tree(&model_graph(n, &edges)).expect("tree is connected")
}

/// Central finite differences of the total loss over every parameter.
pub fn numeric_gradient(model: &MetaModel, inputs: &SampleInputs, h: f64) -> Vec<f64> {
    let base = model.parameters();
    let mut probe = model.clone();
    (0..base.len())
        .map(|k| {
            let mut p = base.clone();
            p[k] = base[k] + h;
            probe.set_parameters(&p).unwrap();
            let up = evaluate(&probe, inputs).unwrap().loss.total;
            p[k] = base[k] - h;
            probe.set_parameters(&p).unwrap();
            let down = evaluate(&probe, inputs).unwrap().loss.total;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-6)
}

/// `alpha_bar_t` for a linear schedule, computed directly from the
/// interpolation formula.
pub fn linear_alpha_bar(steps: usize, start: f64, end: f64, t: usize) -> f64 {
    (1..=t)
        .map(|s| {
            let beta = if steps == 1 {
                start
            } else {
                start + (end - start) * (s - 1) as f64 / (steps - 1) as f64
            };
            1.0 - beta
        })
        .product()
}
