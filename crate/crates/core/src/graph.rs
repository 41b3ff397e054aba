//! Directed graphs with a vertex involution, their canonical constructions,
//! and the divergence operator.
//!
//! Vertices are dense indices `0..n`. The involution is stored as a
//! permutation `star` with `star[star[i]] == i`. A fixed point of `star` is
//! self-dual (`V0`); the other vertices come in dual pairs, and the smaller
//! index of each pair is its representative (`V1`).

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Real field indexed by vertices.
pub type VertexField = DVector<f64>;

/// Real field indexed by the edge list of a [`StarGraph`].
pub type EdgeField = Vec<f64>;

/// Default cap on the vertex count of generated graphs.
pub const DEFAULT_SIZE_CAP: usize = 4096;

/// A ⋆-symmetric weight system: an involution together with a dense
/// nonnegative weight matrix satisfying `w[(i,j)] == w[(star j, star i)]`.
///
/// This is the object that densities and Schur complements act on. It does
/// not require connectivity, so subblocks and reduced systems fit here too.
#[derive(Debug, Clone, PartialEq)]
pub struct StarSystem {
    pub star: Vec<usize>,
    pub w: DMatrix<f64>,
}

impl StarSystem {
    pub fn new(star: Vec<usize>, w: DMatrix<f64>) -> Self {
        debug_assert_eq!(star.len(), w.nrows());
        StarSystem { star, w }
    }

    pub fn n(&self) -> usize {
        self.star.len()
    }

    pub fn is_self_dual(&self, i: usize) -> bool {
        self.star[i] == i
    }

    /// Self-dual vertices.
    pub fn v0(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.star[i] == i).collect()
    }

    /// Representatives of the dual pairs (smaller index of each pair).
    pub fn v1(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.star[i] > i).collect()
    }

    /// All representatives: `V0` and `V1`, in increasing index order.
    pub fn reps(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.star[i] >= i).collect()
    }

    /// Subsystem on an index subset (kept in the given order). The subset
    /// must be closed under `star`.
    pub fn restrict(&self, idx: &[usize]) -> Result<StarSystem> {
        let pos: HashMap<usize, usize> = idx.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let mut star = Vec::with_capacity(idx.len());
        for &i in idx {
            match pos.get(&self.star[i]) {
                Some(&k) => star.push(k),
                None => return Err(Error::NotSelfDual(i)),
            }
        }
        let w = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.w[(idx[a], idx[b])]);
        Ok(StarSystem { star, w })
    }

    /// Largest violation of `w[(i,j)] == w[(j*,i*)]`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n();
        let mut m = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let d = (self.w[(i, j)] - self.w[(self.star[j], self.star[i])]).abs();
                m = m.max(d);
            }
        }
        m
    }

    /// Apply the involution to a vertex field: `(x*)_i = x_{i*}`.
    pub fn dual(&self, x: &VertexField) -> VertexField {
        VertexField::from_fn(self.n(), |i, _| x[self.star[i]])
    }

    /// Tilted weights `W^u_{ij} = W_{ij} e^{u_i + u_{j*}}`.
    pub fn tilt(&self, u: &VertexField) -> StarSystem {
        let n = self.n();
        let w = DMatrix::from_fn(n, n, |i, j| {
            let x = self.w[(i, j)];
            if x == 0.0 {
                0.0
            } else {
                x * (u[i] + u[self.star[j]]).exp()
            }
        });
        StarSystem { star: self.star.clone(), w }
    }

    /// `div(W)(i) = Σ_j W_ij − Σ_j W_ji`.
    pub fn divergence(&self) -> VertexField {
        let n = self.n();
        VertexField::from_fn(n, |i, _| {
            let mut s = 0.0;
            for j in 0..n {
                s += self.w[(i, j)] - self.w[(j, i)];
            }
            s
        })
    }
}

/// A validated ⋆-directed graph with positive ⋆-invariant weights.
#[derive(Debug, Clone)]
pub struct StarGraph {
    names: Vec<String>,
    edges: Vec<(usize, usize)>,
    weights: EdgeField,
    edge_index: HashMap<(usize, usize), usize>,
    out_edges: Vec<Vec<usize>>,
    system: StarSystem,
    strongly_connected: bool,
}

/// Input builder for [`StarGraph`].
#[derive(Debug, Clone, Default)]
pub struct GraphSpec {
    pub names: Vec<String>,
    pub star: Vec<usize>,
    pub edges: Vec<(usize, usize, f64)>,
    pub require_connected: bool,
}

/// Validate and build a graph from indices. Vertex names default to
/// `"0"`, `"1"`, ….
pub fn build_star_graph(star: Vec<usize>, edges: Vec<(usize, usize, f64)>) -> Result<StarGraph> {
    let names = (0..star.len()).map(|i| i.to_string()).collect();
    StarGraph::from_spec(GraphSpec { names, star, edges, require_connected: true })
}

impl StarGraph {
    pub fn from_spec(spec: GraphSpec) -> Result<StarGraph> {
        let GraphSpec { names, star, edges, require_connected } = spec;
        let n = star.len();
        if n == 0 {
            return Err(Error::EmptyInput("no vertices".into()));
        }
        if edges.is_empty() {
            return Err(Error::EmptyInput("no edges".into()));
        }
        let nm = |i: usize| names.get(i).cloned().unwrap_or_else(|| i.to_string());
        for (i, &s) in star.iter().enumerate() {
            if s >= n || star[s] != i {
                return Err(Error::InvolutionBroken(nm(i)));
            }
        }
        let mut edge_index = HashMap::new();
        let mut list = Vec::with_capacity(edges.len());
        let mut weights = Vec::with_capacity(edges.len());
        for &(i, j, w) in &edges {
            if i >= n {
                return Err(Error::UnknownVertex(i.to_string()));
            }
            if j >= n {
                return Err(Error::UnknownVertex(j.to_string()));
            }
            if i == j {
                return Err(Error::SelfLoop(nm(i)));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::NonpositiveWeight(nm(i), nm(j)));
            }
            if edge_index.insert((i, j), list.len()).is_some() {
                return Err(Error::DuplicateEdge(nm(i), nm(j)));
            }
            list.push((i, j));
            weights.push(w);
        }
        for (k, &(i, j)) in list.iter().enumerate() {
            match edge_index.get(&(star[j], star[i])) {
                None => return Err(Error::EdgeClosureBroken(nm(i), nm(j))),
                Some(&d) => {
                    let (a, b) = (weights[k], weights[d]);
                    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
                        return Err(Error::WeightAsymmetry(nm(i), nm(j)));
                    }
                }
            }
        }
        let mut w = DMatrix::zeros(n, n);
        let mut out_edges = vec![Vec::new(); n];
        for (k, &(i, j)) in list.iter().enumerate() {
            w[(i, j)] = weights[k];
            out_edges[i].push(k);
        }
        let system = StarSystem { star, w };
        let unreachable = first_unreachable(&system.w);
        if require_connected {
            if let Some((a, b)) = unreachable {
                return Err(Error::NotStronglyConnected(nm(a), nm(b)));
            }
        }
        Ok(StarGraph {
            names,
            edges: list,
            weights,
            edge_index,
            out_edges,
            system,
            strongly_connected: unreachable.is_none(),
        })
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }
    pub fn names(&self) -> &[String] {
        &self.names
    }
    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }
    pub fn vertex_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|s| s == name)
    }
    pub fn star(&self) -> &[usize] {
        &self.system.star
    }
    pub fn dual_vertex(&self, i: usize) -> usize {
        self.system.star[i]
    }
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
    pub fn weights(&self) -> &EdgeField {
        &self.weights
    }
    pub fn weight_matrix(&self) -> &DMatrix<f64> {
        &self.system.w
    }
    pub fn system(&self) -> &StarSystem {
        &self.system
    }
    pub fn edge_id(&self, i: usize, j: usize) -> Option<usize> {
        self.edge_index.get(&(i, j)).copied()
    }
    /// Index of the dual edge `(j*, i*)`.
    pub fn dual_edge(&self, e: usize) -> usize {
        let (i, j) = self.edges[e];
        self.edge_index[&(self.system.star[j], self.system.star[i])]
    }
    pub fn out_edges(&self, i: usize) -> &[usize] {
        &self.out_edges[i]
    }
    pub fn is_strongly_connected(&self) -> bool {
        self.strongly_connected
    }
    pub fn v0(&self) -> Vec<usize> {
        self.system.v0()
    }
    pub fn v1(&self) -> Vec<usize> {
        self.system.v1()
    }
    pub fn reps(&self) -> Vec<usize> {
        self.system.reps()
    }

    /// Edge classes `{e, e*}`, each listed once by its smaller edge index.
    pub fn edge_classes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for e in 0..self.edges.len() {
            let d = self.dual_edge(e);
            if d == e {
                out.push(vec![e]);
            } else if e < d {
                out.push(vec![e, d]);
            }
        }
        out
    }

    /// Same graph with new edge weights (must stay ⋆-invariant and positive).
    pub fn with_weights(&self, weights: &[f64]) -> Result<StarGraph> {
        let edges = self
            .edges
            .iter()
            .zip(weights)
            .map(|(&(i, j), &w)| (i, j, w))
            .collect();
        StarGraph::from_spec(GraphSpec {
            names: self.names.clone(),
            star: self.system.star.clone(),
            edges,
            require_connected: self.strongly_connected,
        })
    }

    /// Edge field of `W^u` in edge order.
    pub fn tilted_weights(&self, u: &VertexField) -> EdgeField {
        let s = &self.system.star;
        self.edges
            .iter()
            .zip(&self.weights)
            .map(|(&(i, j), &w)| w * (u[i] + u[s[j]]).exp())
            .collect()
    }

    /// Short stable hash of the graph structure and weights.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        for &s in &self.system.star {
            h.update((s as u64).to_le_bytes());
        }
        let mut order: Vec<usize> = (0..self.edges.len()).collect();
        order.sort_by_key(|&k| self.edges[k]);
        for k in order {
            let (i, j) = self.edges[k];
            h.update((i as u64).to_le_bytes());
            h.update((j as u64).to_le_bytes());
            h.update(self.weights[k].to_bits().to_le_bytes());
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn reach(w: &DMatrix<f64>, start: usize, forward: bool) -> Vec<bool> {
    let n = w.nrows();
    let mut seen = vec![false; n];
    let mut q = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = q.pop_front() {
        for j in 0..n {
            let x = if forward { w[(i, j)] } else { w[(j, i)] };
            if x > 0.0 && !seen[j] {
                seen[j] = true;
                q.push_back(j);
            }
        }
    }
    seen
}

/// First pair `(a, b)` with no directed path from `a` to `b`, using one
/// forward and one backward traversal from vertex 0.
fn first_unreachable(w: &DMatrix<f64>) -> Option<(usize, usize)> {
    let fwd = reach(w, 0, true);
    if let Some(b) = fwd.iter().position(|&s| !s) {
        return Some((0, b));
    }
    let bwd = reach(w, 0, false);
    bwd.iter().position(|&s| !s).map(|a| (a, 0))
}

/// De Bruijn graph on words of length `k` over an alphabet of size `m`,
/// with the involution given by word reversal.
///
/// Words are encoded in base `m`, first letter most significant. Edges
/// `(x1..xk) -> (x2..x_{k+1})` from a constant word to itself are dropped
/// because self-loops are not allowed; all weights are `weight`.
pub fn de_bruijn_graph(m: usize, k: usize, weight: f64, cap: usize) -> Result<StarGraph> {
    if m < 2 || k < 1 {
        return Err(Error::EmptyInput("de Bruijn needs alphabet >= 2 and k >= 1".into()));
    }
    let n = m
        .checked_pow(k as u32)
        .filter(|&n| n <= cap)
        .ok_or(Error::SizeLimit(m.saturating_pow(k as u32), cap))?;
    let digits = |x: usize| -> Vec<usize> {
        let mut d = vec![0; k];
        let mut y = x;
        for p in (0..k).rev() {
            d[p] = y % m;
            y /= m;
        }
        d
    };
    let encode = |d: &[usize]| d.iter().fold(0usize, |acc, &c| acc * m + c);
    let names: Vec<String> = (0..n)
        .map(|x| digits(x).iter().map(|c| c.to_string()).collect::<Vec<_>>().join(""))
        .collect();
    let star: Vec<usize> = (0..n)
        .map(|x| {
            let mut d = digits(x);
            d.reverse();
            encode(&d)
        })
        .collect();
    let mut edges = Vec::new();
    for x in 0..n {
        let d = digits(x);
        for c in 0..m {
            let mut e = d[1..].to_vec();
            e.push(c);
            let y = encode(&e);
            if y != x {
                edges.push((x, y, weight));
            }
        }
    }
    StarGraph::from_spec(GraphSpec { names, star, edges, require_connected: true })
}

/// Disjoint union of a directed graph `G1` with its reversed copy, the
/// involution exchanging each vertex with its copy.
///
/// Vertex `i` of `G1` keeps index `i`; its copy gets index `n + i`. With
/// `glue_at = Some(g)` the copy of `g` is identified with `g` (which becomes
/// self-dual) and later copies shift down by one. Without gluing the result
/// is not strongly connected, and is returned with that flag unset.
pub fn doubled_graph(
    n: usize,
    edges: &[(usize, usize, f64)],
    glue_at: Option<usize>,
) -> Result<StarGraph> {
    if n == 0 || edges.is_empty() {
        return Err(Error::EmptyInput("doubled graph needs at least one edge".into()));
    }
    let mut w = DMatrix::zeros(n, n);
    for &(i, j, x) in edges {
        if i >= n || j >= n {
            return Err(Error::UnknownVertex(i.max(j).to_string()));
        }
        w[(i, j)] = x;
    }
    if let Some((a, b)) = first_unreachable(&w) {
        return Err(Error::NotStronglyConnected(a.to_string(), b.to_string()));
    }
    let copy = |i: usize| -> usize {
        match glue_at {
            Some(g) if i == g => g,
            Some(g) if i > g => n + i - 1,
            _ => n + i,
        }
    };
    let total = if glue_at.is_some() { 2 * n - 1 } else { 2 * n };
    let mut star = vec![0; total];
    let mut names = vec![String::new(); total];
    for i in 0..n {
        star[i] = copy(i);
        star[copy(i)] = i;
        names[i] = i.to_string();
        if copy(i) != i {
            names[copy(i)] = format!("{i}*");
        }
    }
    let mut all = Vec::with_capacity(2 * edges.len());
    for &(i, j, x) in edges {
        all.push((i, j, x));
        all.push((copy(j), copy(i), x));
    }
    StarGraph::from_spec(GraphSpec {
        names,
        star,
        edges: all,
        require_connected: glue_at.is_some(),
    })
}

/// `div(x)(i) = Σ_{tail=i} x_e − Σ_{head=i} x_e`.
pub fn divergence(g: &StarGraph, x: &[f64]) -> VertexField {
    let mut d = VertexField::zeros(g.n());
    for (k, &(i, j)) in g.edges().iter().enumerate() {
        d[i] += x[k];
        d[j] -= x[k];
    }
    d
}

/// Whether `div(α) = δ_{i0*} − δ_{i0}` holds to `1e-12`.
pub fn check_divergence_condition(g: &StarGraph, alpha: &[f64], i0: usize) -> bool {
    let d = divergence(g, alpha);
    let i0s = g.dual_vertex(i0);
    (0..g.n()).all(|i| {
        let target = (i == i0s) as i32 as f64 - (i == i0) as i32 as f64;
        (d[i] - target).abs() <= 1e-12
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dual_pair(wa: f64, wb: f64) -> StarGraph {
        build_star_graph(vec![1, 0], vec![(0, 1, wa), (1, 0, wb)]).unwrap()
    }

    #[test]
    fn rejects_self_loop() {
        let e = build_star_graph(vec![0], vec![(0, 0, 1.0)]).unwrap_err();
        assert!(matches!(e, Error::SelfLoop(_)));
    }

    #[test]
    fn identity_involution() {
        let g = build_star_graph(vec![0, 1], vec![(0, 1, 2.0), (1, 0, 2.0)]).unwrap();
        assert_eq!(g.v0(), vec![0, 1]);
        assert!(g.v1().is_empty());
    }

    #[test]
    fn dual_pair_edges_are_self_images() {
        let g = dual_pair(2.0, 5.0);
        assert!(g.v0().is_empty());
        assert_eq!(g.v1(), vec![0]);
        assert_eq!(g.dual_edge(0), 0);
        assert_eq!(g.dual_edge(1), 1);
    }

    #[test]
    fn validation_errors_name_first_violation() {
        let e = build_star_graph(vec![1, 1], vec![(0, 1, 1.0)]).unwrap_err();
        assert!(matches!(e, Error::InvolutionBroken(_)));
        let e = build_star_graph(vec![0, 1], vec![(0, 1, 1.0), (1, 0, 2.0)]).unwrap_err();
        assert_eq!(e, Error::WeightAsymmetry("0".into(), "1".into()));
        let e = build_star_graph(vec![0, 1, 2], vec![(0, 1, 1.0), (1, 0, 1.0), (2, 0, 1.0), (0, 2, 1.0), (1, 2, 1.0)])
            .unwrap_err();
        assert!(matches!(e, Error::EdgeClosureBroken(..)));
        let e = build_star_graph(vec![0, 1, 2, 3], vec![(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)])
            .unwrap_err();
        assert!(matches!(e, Error::NotStronglyConnected(..)));
        let e = build_star_graph(vec![0, 1], vec![(0, 1, 0.0), (1, 0, 0.0)]).unwrap_err();
        assert!(matches!(e, Error::NonpositiveWeight(..)));
    }

    #[test]
    fn de_bruijn_small() {
        let g = de_bruijn_graph(2, 1, 1.0, 100).unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.star(), &[0, 1]);
        assert_eq!(g.edges().len(), 2);

        let g = de_bruijn_graph(2, 2, 1.0, 100).unwrap();
        assert_eq!(g.n(), 4);
        let v0: Vec<&str> = g.v0().iter().map(|&i| g.name(i)).collect();
        assert_eq!(v0, vec!["00", "11"]);
        let i01 = g.vertex_index("01").unwrap();
        assert_eq!(g.name(g.dual_vertex(i01)), "10");

        let g = de_bruijn_graph(3, 2, 1.0, 100).unwrap();
        assert_eq!(g.n(), 9);
        assert_eq!(g.edges().len(), 27 - 3);
        for e in 0..g.edges().len() {
            assert_eq!(g.dual_edge(g.dual_edge(e)), e);
        }
        assert!(matches!(de_bruijn_graph(4, 6, 1.0, 100), Err(Error::SizeLimit(..))));
    }

    #[test]
    fn doubled_graph_variants() {
        let g = doubled_graph(2, &[(0, 1, 1.0), (1, 0, 2.0)], None).unwrap();
        assert_eq!(g.n(), 4);
        assert!(!g.is_strongly_connected());
        assert_eq!(g.star(), &[2, 3, 0, 1]);
        let g = doubled_graph(2, &[(0, 1, 1.0), (1, 0, 2.0)], Some(0)).unwrap();
        assert_eq!(g.n(), 3);
        assert!(g.is_strongly_connected());
        assert_eq!(g.v0(), vec![0]);
        assert!(doubled_graph(1, &[], None).is_err());
    }

    #[test]
    fn divergence_examples() {
        let g = build_star_graph(vec![0, 1], vec![(0, 1, 3.0), (1, 0, 3.0)]).unwrap();
        let d = divergence(&g, &[3.0, 1.0]);
        assert_eq!(d.as_slice(), &[2.0, -2.0]);
        assert!(d.sum().abs() < 1e-15);
    }

    #[test]
    fn divergence_condition_dual_pair() {
        let g = dual_pair(1.0, 1.0);
        assert!(!check_divergence_condition(&g, &[1.0, 1.0], 0));
        assert!(!check_divergence_condition(&g, &[2.0, 1.0], 0));
        assert!(check_divergence_condition(&g, &[1.0, 2.0], 0));
    }

    #[test]
    fn tilt_is_star_invariant() {
        let g = de_bruijn_graph(2, 3, 1.5, 100).unwrap();
        let u = VertexField::from_fn(g.n(), |i, _| (i as f64 * 0.37).sin());
        assert!(g.system().tilt(&u).symmetry_defect() < 1e-12);
    }
}
