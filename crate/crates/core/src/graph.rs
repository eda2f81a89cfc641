//! Weighted graph model and measure-weighted integration.
//!
//! Vertices are identified by strings and ordered ascending (byte-wise
//! lexicographic). Every sum in the crate walks vertices, and the neighbors
//! of each vertex, in this order, so results are bit-reproducible.

use std::collections::{BTreeMap, HashSet, VecDeque};

use crate::error::{Error, Result};

/// A finite connected graph with vertex measure `mu` and symmetric edge
/// weights. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    ids: Vec<String>,
    mu: Vec<f64>,
    /// Each undirected edge once, as `(i, j, w)` with `i < j`, sorted.
    edges: Vec<(usize, usize, f64)>,
    offsets: Vec<usize>,
    nbr: Vec<usize>,
    nbr_w: Vec<f64>,
}

impl WeightedGraph {
    /// Validates and builds a graph. Edge records may name the endpoints in
    /// either order; the weight is stored once per unordered pair.
    pub fn build<S, T>(vertices: &[(S, f64)], edges: &[(T, T, f64)]) -> Result<Self>
    where
        S: AsRef<str>,
        T: AsRef<str>,
    {
        if vertices.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let mut sorted: BTreeMap<&str, f64> = BTreeMap::new();
        for (id, mu) in vertices {
            let id = id.as_ref();
            if !(mu.is_finite() && *mu > 0.0) {
                return Err(Error::NonPositiveMeasure(format!("vertex '{id}' has mu = {mu}")));
            }
            if sorted.insert(id, *mu).is_some() {
                return Err(Error::DuplicateVertex(id.to_string()));
            }
        }
        let ids: Vec<String> = sorted.keys().map(|s| s.to_string()).collect();
        let mu: Vec<f64> = sorted.values().copied().collect();
        let index: BTreeMap<&str, usize> =
            sorted.keys().enumerate().map(|(i, s)| (*s, i)).collect();

        let mut seen = HashSet::new();
        let mut list = Vec::with_capacity(edges.len());
        for (a, b, w) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            let ia = *index.get(a).ok_or_else(|| Error::UnknownVertexInEdge(a.to_string()))?;
            let ib = *index.get(b).ok_or_else(|| Error::UnknownVertexInEdge(b.to_string()))?;
            if ia == ib {
                return Err(Error::SelfLoop(a.to_string()));
            }
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::NonPositiveMeasure(format!("edge ('{a}', '{b}') has w = {w}")));
            }
            let key = (ia.min(ib), ia.max(ib));
            if !seen.insert(key) {
                return Err(Error::DuplicateEdge(a.to_string(), b.to_string()));
            }
            list.push((key.0, key.1, *w));
        }
        list.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));

        let n = ids.len();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in &list {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut nbr = Vec::with_capacity(2 * list.len());
        let mut nbr_w = Vec::with_capacity(2 * list.len());
        offsets.push(0);
        for row in &mut adj {
            row.sort_by_key(|&(j, _)| j);
            for &(j, w) in row.iter() {
                nbr.push(j);
                nbr_w.push(w);
            }
            offsets.push(nbr.len());
        }

        let g = Self { ids, mu, edges: list, offsets, nbr, nbr_w };
        g.check_connected()?;
        Ok(g)
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for (j, _) in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(k) => Err(Error::Disconnected(self.ids[k].clone(), self.ids[0].clone())),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.binary_search_by(|s| s.as_str().cmp(id)).ok()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Undirected edges `(i, j, w)` with `i < j`, in ascending order.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Neighbors of `i` with their edge weights, ascending by index.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.nbr[range.clone()].iter().copied().zip(self.nbr_w[range].iter().copied())
    }

    pub fn volume(&self) -> f64 {
        self.mu.iter().sum()
    }

    /// `Σ_i μ_i u_i`.
    pub fn integrate(&self, u: &VertexFunction) -> Result<f64> {
        self.check_domain(u)?;
        Ok(self.integrate_slice(u.as_slice()))
    }

    pub(crate) fn integrate_slice(&self, u: &[f64]) -> f64 {
        self.mu.iter().zip(u).map(|(m, x)| m * x).sum()
    }

    /// `Σ_i μ_i φ(u_i)` without materializing `φ(u)`.
    pub(crate) fn integrate_map(&self, u: &[f64], mut phi: impl FnMut(usize, f64) -> f64) -> f64 {
        self.mu.iter().zip(u).enumerate().map(|(i, (m, x))| m * phi(i, *x)).sum()
    }

    pub fn check_domain(&self, u: &VertexFunction) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::DomainMismatch { expected: self.len(), got: u.len() });
        }
        Ok(())
    }
}

/// One finite real value per vertex, in the graph's vertex order.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexFunction(Vec<f64>);

impl VertexFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn constant(g: &WeightedGraph, c: f64) -> Self {
        Self(vec![c; g.len()])
    }

    /// Builds a function from `(id, value)` pairs; every vertex must appear
    /// exactly once.
    pub fn from_pairs<S: AsRef<str>>(g: &WeightedGraph, pairs: &[(S, f64)]) -> Result<Self> {
        let mut values = vec![f64::NAN; g.len()];
        for (id, x) in pairs {
            let i = g
                .index_of(id.as_ref())
                .ok_or_else(|| Error::UnknownVertexInEdge(id.as_ref().to_string()))?;
            values[i] = *x;
        }
        if pairs.len() != g.len() {
            return Err(Error::DomainMismatch { expected: g.len(), got: pairs.len() });
        }
        Self::new(values)
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self(self.0.iter().map(|x| t * x).collect())
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl std::ops::Index<usize> for VertexFunction {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
