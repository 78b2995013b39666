#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subflow::space::{build_path_grid, Edge, GridSpec, MeasureSpace, WeightedGraph};

/// Connected graph on `n` nodes: a random spanning tree plus extra edges,
/// masses and weights drawn from [0.5, 2].
pub fn random_graph(seed: u64, n: usize, grounded: &[usize]) -> WeightedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mass: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for k in 1..n {
        let j = rng.random_range(0..k);
        seen.insert((j, k));
        edges.push(Edge { i: j, j: k, weight: rng.random_range(0.5..2.0) });
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if !seen.contains(&(i, j)) && rng.random_bool(0.3) {
                edges.push(Edge { i, j, weight: rng.random_range(0.5..2.0) });
            }
        }
    }
    WeightedGraph::new(MeasureSpace::new(mass, grounded).unwrap(), edges).unwrap()
}

pub fn grounded_grid(n_points: usize, p: f64) -> WeightedGraph {
    build_path_grid(&GridSpec { n_points, length: 1.0, p_for_weights: p, dirichlet_ends: true }).unwrap()
}

pub fn random_vector(seed: u64, graph: &WeightedGraph) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = graph.space();
    (0..space.len())
        .map(|i| if space.is_grounded(i) { 0.0 } else { rng.random_range(-1.0..1.0) })
        .collect()
}

/// `f(L) u` for the p = 2 generator `L = M^{-1} grad E_2`, by
/// eigendecomposition of `M^{-1/2} K M^{-1/2}` on the free nodes.
pub fn spectral_apply(graph: &WeightedGraph, u: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let space = graph.space();
    let free: Vec<usize> = (0..space.len()).filter(|i| !space.is_grounded(*i)).collect();
    let pos = |i: usize| free.iter().position(|&k| k == i);
    let nf = free.len();
    let mut k = DMatrix::<f64>::zeros(nf, nf);
    for e in graph.edges() {
        let w = 2.0 * e.weight;
        match (pos(e.i), pos(e.j)) {
            (Some(a), Some(b)) => {
                k[(a, a)] += w;
                k[(b, b)] += w;
                k[(a, b)] -= w;
                k[(b, a)] -= w;
            }
            (Some(a), None) => k[(a, a)] += w,
            (None, Some(b)) => k[(b, b)] += w,
            (None, None) => {}
        }
    }
    let sq: Vec<f64> = free.iter().map(|&i| space.mass()[i].sqrt()).collect();
    let b = DMatrix::from_fn(nf, nf, |r, c| k[(r, c)] / (sq[r] * sq[c]));
    let eig = SymmetricEigen::new(b);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let fl = DVector::from_iterator(
        nf,
        eig.eigenvalues.iter().map(|&l| if l.abs() <= 1e-12 * lmax { f(0.0) } else { f(l) }),
    );
    let x = DVector::from_iterator(nf, free.iter().zip(&sq).map(|(&i, s)| u[i] * s));
    let y = &eig.eigenvectors * DVector::from_iterator(nf, (eig.eigenvectors.transpose() * x).iter().zip(fl.iter()).map(|(a, b)| a * b));
    let mut out = vec![0.0; space.len()];
    for (k, &i) in free.iter().enumerate() {
        out[i] = y[k] / sq[k];
    }
    out
}

/// Mass-weighted L2 norm computed directly.
pub fn m_norm(graph: &WeightedGraph, u: &[f64]) -> f64 {
    let space = graph.space();
    u.iter()
        .enumerate()
        .filter(|(i, _)| !space.is_grounded(*i))
        .map(|(i, x)| space.mass()[i] * x * x)
        .sum::<f64>()
        .sqrt()
}

pub fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
