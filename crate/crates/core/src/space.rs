//! Finite weighted measure spaces and the graphs carrying the discrete gradient.
//!
//! Functions are plain node-indexed slices. Grounded (Dirichlet) nodes are
//! stored like any other node but every operation that produces a function
//! writes zero there.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node set with positive masses and an optional grounded subset.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSpace {
    mass: Vec<f64>,
    grounded: Vec<bool>,
}

impl MeasureSpace {
    pub fn new(mass: Vec<f64>, grounded: &[usize]) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidSpace("empty node set".into()));
        }
        if let Some((i, m)) = mass.iter().enumerate().find(|(_, m)| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidSpace(format!("mass of node {i} is {m}, must be positive")));
        }
        let mut flags = vec![false; mass.len()];
        for &g in grounded {
            if g >= mass.len() {
                return Err(Error::InvalidSpace(format!("grounded node {g} out of range")));
            }
            flags[g] = true;
        }
        let space = Self { mass, grounded: flags };
        if space.free_nodes().next().is_none() {
            return Err(Error::InvalidSpace("every node is grounded".into()));
        }
        Ok(space)
    }

    /// Uniform probability measure on `n` nodes.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n], &[])
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn is_grounded(&self, i: usize) -> bool {
        self.grounded[i]
    }

    pub fn has_grounding(&self) -> bool {
        self.grounded.iter().any(|&g| g)
    }

    pub fn grounded_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.grounded[i]).collect()
    }

    pub fn free_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| !self.grounded[i])
    }

    /// m(X), summed over non-grounded nodes.
    pub fn total_mass(&self) -> f64 {
        self.free_nodes().map(|i| self.mass[i]).sum()
    }

    pub fn check_shape(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::Shape { expected: self.len(), got: u.len() });
        }
        Ok(())
    }

    /// Zero out grounded entries in place.
    pub fn project(&self, u: &mut [f64]) {
        for (x, &g) in u.iter_mut().zip(&self.grounded) {
            if g {
                *x = 0.0;
            }
        }
    }

    pub fn lp_norm(&self, u: &[f64], q: f64) -> Result<f64> {
        self.check_shape(u)?;
        if q.is_nan() || q < 1.0 {
            return Err(Error::InvalidExponent(q));
        }
        Ok(self.lp_norm_unchecked(u, q))
    }

    pub(crate) fn lp_norm_unchecked(&self, u: &[f64], q: f64) -> f64 {
        if q.is_infinite() {
            return u.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        }
        if q == 2.0 {
            return self.dot(u, u).sqrt();
        }
        // factor out the max to keep |u|^q in range
        let scale = u.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let s: f64 = u
            .iter()
            .zip(&self.mass)
            .map(|(x, m)| (x.abs() / scale).powf(q) * m)
            .sum();
        scale * s.powf(1.0 / q)
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check_shape(u)?;
        self.check_shape(v)?;
        Ok(self.dot(u, v))
    }

    pub(crate) fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).zip(&self.mass).map(|((a, b), m)| a * b * m).sum()
    }

    pub(crate) fn norm2(&self, u: &[f64]) -> f64 {
        self.dot(u, u).sqrt()
    }
}

/// Free function form of [`MeasureSpace::lp_norm`].
pub fn lp_norm(space: &MeasureSpace, u: &[f64], q: f64) -> Result<f64> {
    space.lp_norm(u, q)
}

pub fn inner(space: &MeasureSpace, u: &[f64], v: &[f64]) -> Result<f64> {
    space.inner(u, v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Measure space plus weighted undirected edges.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    space: MeasureSpace,
    edges: Vec<Edge>,
}

impl WeightedGraph {
    pub fn new(space: MeasureSpace, edges: Vec<Edge>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &edges {
            if e.i >= space.len() || e.j >= space.len() {
                return Err(Error::InvalidGraph(format!("edge ({}, {}) out of range", e.i, e.j)));
            }
            if e.i == e.j {
                return Err(Error::InvalidGraph(format!("self-loop at node {}", e.i)));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has weight {}",
                    e.i, e.j, e.weight
                )));
            }
            if !seen.insert((e.i.min(e.j), e.i.max(e.j))) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", e.i, e.j)));
            }
        }
        Ok(Self { space, edges })
    }

    pub fn space(&self) -> &MeasureSpace {
        &self.space
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    /// Connectivity over all nodes (grounded ones included).
    pub fn is_connected(&self) -> bool {
        let n = self.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.i), find(&mut parent, e.j));
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        (0..n).all(|i| find(&mut parent, i) == root)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: GraphFile = serde_json::from_str(&text)?;
        file.into_graph()
    }

    pub fn to_file_format(&self) -> GraphFile {
        GraphFile {
            nodes: self.len(),
            masses: self.space.mass.clone(),
            edges: self.edges.iter().map(|e| (e.i, e.j, e.weight)).collect(),
            grounded: self.space.grounded_nodes(),
        }
    }
}

/// On-disk graph description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub nodes: usize,
    pub masses: Vec<f64>,
    pub edges: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub grounded: Vec<usize>,
}

impl GraphFile {
    pub fn into_graph(self) -> Result<WeightedGraph> {
        if self.masses.len() != self.nodes {
            return Err(Error::Shape { expected: self.nodes, got: self.masses.len() });
        }
        let space = MeasureSpace::new(self.masses, &self.grounded)?;
        let edges = self
            .edges
            .into_iter()
            .map(|(i, j, weight)| Edge { i, j, weight })
            .collect();
        WeightedGraph::new(space, edges)
    }
}

/// Uniform 1-D grid on `[0, length]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_points: usize,
    pub length: f64,
    pub p_for_weights: f64,
    pub dirichlet_ends: bool,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 points, got {}",
                self.n_points
            )));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid length {} must be positive", self.length)));
        }
        if !(self.p_for_weights >= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "p_for_weights {} must be >= 2",
                self.p_for_weights
            )));
        }
        if self.dirichlet_ends && self.n_points < 3 {
            return Err(Error::InvalidParameter("a grounded grid needs an interior node".into()));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.n_points - 1) as f64
    }

    /// Node coordinates.
    pub fn points(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n_points).map(|i| i as f64 * h).collect()
    }
}

/// Path graph with trapezoid masses and weights `h^(1-p)`, so that
/// `sum w |du|^p` is a first-order discretization of `int |u'|^p`.
pub fn build_path_grid(spec: &GridSpec) -> Result<WeightedGraph> {
    spec.validate()?;
    let n = spec.n_points;
    let h = spec.spacing();
    let mut mass = vec![h; n];
    mass[0] = h / 2.0;
    mass[n - 1] = h / 2.0;
    let grounded: Vec<usize> = if spec.dirichlet_ends { vec![0, n - 1] } else { vec![] };
    let w = h.powf(1.0 - spec.p_for_weights);
    let edges = (0..n - 1).map(|i| Edge { i, j: i + 1, weight: w }).collect();
    WeightedGraph::new(MeasureSpace::new(mass, &grounded)?, edges)
}
