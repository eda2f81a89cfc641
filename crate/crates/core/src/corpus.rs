//! Seeded random instances used by the test suites and benchmarks.
//!
//! Graphs are connected by construction: a random spanning tree plus extra
//! edges. Measures and weights are drawn from `[0.5, 2]`, `h` from
//! `[−2, −0.1]` and `f` from `[0.2, 3]`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::functionals::{ProblemSpec, SolveMode};
use crate::graph::{VertexFunction, WeightedGraph};
use crate::operators::LaplacianVariant;

pub fn vertex_id(i: usize) -> String {
    format!("v{i:02}")
}

/// A connected graph on `n` vertices.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize) -> WeightedGraph {
    let verts: Vec<(String, f64)> =
        (0..n).map(|i| (vertex_id(i), rng.random_range(0.5..=2.0))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut pairs = std::collections::BTreeSet::new();
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        let (a, b) = (order[k].min(parent), order[k].max(parent));
        pairs.insert((a, b));
    }
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(0.3) {
                pairs.insert((a, b));
            }
        }
    }
    let edges: Vec<(String, String, f64)> = pairs
        .into_iter()
        .map(|(a, b)| (vertex_id(a), vertex_id(b), rng.random_range(0.5..=2.0)))
        .collect();
    WeightedGraph::build(&verts, &edges).expect("generated graph is valid")
}

pub fn random_h<R: Rng>(rng: &mut R, g: &WeightedGraph) -> VertexFunction {
    VertexFunction::new((0..g.len()).map(|_| rng.random_range(-2.0..=-0.1)).collect()).unwrap()
}

pub fn random_f<R: Rng>(rng: &mut R, g: &WeightedGraph) -> VertexFunction {
    VertexFunction::new((0..g.len()).map(|_| rng.random_range(0.2..=3.0)).collect()).unwrap()
}

/// A strictly positive function with values in `[lo, hi]`.
pub fn random_positive<R: Rng>(rng: &mut R, g: &WeightedGraph, lo: f64, hi: f64) -> VertexFunction {
    VertexFunction::new((0..g.len()).map(|_| rng.random_range(lo..=hi)).collect()).unwrap()
}

/// A random problem on a random graph of `n` vertices.
pub fn random_problem<R: Rng>(
    rng: &mut R,
    n: usize,
    exponents: (f64, f64, f64),
    variant: LaplacianVariant,
    mode: SolveMode,
) -> (WeightedGraph, ProblemSpec) {
    let g = random_graph(rng, n);
    let h = random_h(rng, &g);
    let f = random_f(rng, &g);
    let (p, q, alpha) = exponents;
    let prob = ProblemSpec::new(&g, p, q, alpha, h, f, variant, mode).expect("valid problem");
    (g, prob)
}
