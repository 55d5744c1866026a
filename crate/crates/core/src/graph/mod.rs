//! Colored multigraphs encoding diagram integrals, and the symbolic
//! integration-by-parts expansion of k-point correlation functions.
//!
//! Vertices `0..k` are the boundary points `x_1..x_k`; vertices `k..k+l` are
//! interior (integrated) points. A vertex with degree `d` carries the Wick
//! power `:Phi^{4-d}:` if interior, or `Phi^{1-d}` if boundary.

mod canon;
mod ibp;
mod io;

pub use canon::{canonicalize, canonicalize_uncolored, CanonicalKey};
pub use ibp::{
    expand, expand_with, ibp_step, merge_terms, merge_uncolored, unmerged_terms, ExpandOptions,
    Expansion,
    SelectionRule,
};
pub use io::{parse_expansion, to_dot, write_expansion};

use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("vertex {vertex} has no free field insertion (degree {degree})")]
    Saturated { vertex: usize, degree: usize },
    #[error("vertex {0} does not exist")]
    NoSuchVertex(usize),
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("expansion exceeded the term budget of {0}")]
    TermBudget(usize),
    #[error("invalid expansion request: {0}")]
    InvalidRequest(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeColor {
    Red,
    Green,
}

impl EdgeColor {
    pub fn name(self) -> &'static str {
        match self {
            EdgeColor::Red => "red",
            EdgeColor::Green => "green",
        }
    }
}

/// Unordered edge, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub color: EdgeColor,
}

impl Edge {
    pub fn new(u: usize, v: usize, color: EdgeColor) -> Self {
        Self {
            a: u.min(v),
            b: u.max(v),
            color,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IbpGraph {
    k: usize,
    interior: usize,
    edges: Vec<Edge>,
    degrees: Vec<usize>,
}

impl IbpGraph {
    /// The seed graph of the k-point function: k isolated boundary vertices.
    pub fn seed(k: usize) -> Self {
        Self {
            k,
            interior: 0,
            edges: Vec::new(),
            degrees: vec![0; k],
        }
    }

    pub fn from_edges(k: usize, interior: usize, edges: &[Edge]) -> Result<Self, GraphError> {
        let mut g = Self {
            k,
            interior,
            edges: Vec::new(),
            degrees: vec![0; k + interior],
        };
        for e in edges {
            g.push_edge(*e)?;
        }
        g.edges.sort();
        Ok(g)
    }

    fn push_edge(&mut self, e: Edge) -> Result<(), GraphError> {
        if e.a == e.b {
            return Err(GraphError::SelfLoop(e.a));
        }
        if e.b >= self.vertex_count() {
            return Err(GraphError::NoSuchVertex(e.b));
        }
        self.degrees[e.a] += 1;
        self.degrees[e.b] += 1;
        self.edges.push(e);
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn interior_count(&self) -> usize {
        self.interior
    }

    pub fn vertex_count(&self) -> usize {
        self.k + self.interior
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degree(&self, v: usize) -> usize {
        self.degrees[v]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        v < self.k
    }

    /// Number of free field insertions at `v`: `1 - deg` on the boundary,
    /// `4 - deg` in the interior (saturating at zero for malformed graphs).
    pub fn insertions(&self, v: usize) -> usize {
        let cap = if self.is_boundary(v) { 1 } else { 4 };
        cap - self.degrees[v].min(cap)
    }

    /// Satisfies the degree constraints of the class `H`.
    pub fn degrees_valid(&self) -> bool {
        (0..self.vertex_count()).all(|v| {
            let d = self.degrees[v];
            if self.is_boundary(v) {
                d <= 1
            } else {
                (1..=4).contains(&d)
            }
        })
    }

    /// Pure Feynman diagram: boundary degree 1, interior degree 4.
    pub fn is_pure(&self) -> bool {
        n_phi(self) == 0 && self.degrees_valid()
    }

    /// Edge multiplicities keyed by endpoints, colors ignored.
    pub fn multiplicities(&self) -> Vec<((usize, usize), usize)> {
        let mut out: Vec<((usize, usize), usize)> = Vec::new();
        for e in &self.edges {
            match out.last_mut() {
                Some((key, m)) if *key == (e.a, e.b) => *m += 1,
                _ => out.push(((e.a, e.b), 1)),
            }
        }
        // edges are sorted by (a, b, color) so equal endpoints are adjacent
        out
    }

    pub(crate) fn with_edge(&self, e: Edge) -> Self {
        let mut g = self.clone();
        g.push_edge(e).expect("caller checks vertices");
        g.edges.sort();
        g
    }

    pub(crate) fn with_new_interior(&self, attach: usize, color: EdgeColor) -> (Self, usize) {
        let mut g = self.clone();
        g.interior += 1;
        g.degrees.push(0);
        let z = g.vertex_count() - 1;
        g.push_edge(Edge::new(attach, z, color))
            .expect("fresh vertex");
        g.edges.sort();
        (g, z)
    }

    /// Relabels interior vertices: `perm[i]` is the new index of interior `k+i`.
    pub(crate) fn relabeled(&self, perm: &[usize]) -> Self {
        let map = |v: usize| if v < self.k { v } else { self.k + perm[v - self.k] };
        let edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| Edge::new(map(e.a), map(e.b), e.color))
            .collect();
        Self::from_edges(self.k, self.interior, &edges).expect("relabeling preserves validity")
    }
}

/// `n_Phi(G) = 4 l + k - sum_v deg(v)`.
pub fn n_phi(g: &IbpGraph) -> i64 {
    let total: usize = g.degrees.iter().sum();
    4 * g.interior as i64 + g.k as i64 - total as i64
}

/// Whether the red edges form exactly k trees, each holding one boundary vertex.
pub fn red_forest_check(g: &IbpGraph) -> bool {
    let n = g.vertex_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for e in g.edges.iter().filter(|e| e.color == EdgeColor::Red) {
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        if ra == rb {
            return false;
        }
        parent[ra] = rb;
    }
    let mut boundary_in_root = vec![0usize; n];
    let mut roots = 0;
    for v in 0..n {
        let r = find(&mut parent, v);
        if r == v {
            roots += 1;
        }
        if g.is_boundary(v) {
            boundary_in_root[r] += 1;
        }
    }
    roots == g.k && (0..n).all(|v| find(&mut parent, v) != v || boundary_in_root[v] == 1)
}

/// A rational multiple of `lambda^p I_G`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coeff: BigRational,
    pub lambda_power: u32,
    pub graph: IbpGraph,
}

impl Term {
    pub fn new(coeff: BigRational, lambda_power: u32, graph: IbpGraph) -> Self {
        Self {
            coeff,
            lambda_power,
            graph,
        }
    }

    pub fn seed(k: usize) -> Self {
        Self::new(rational(1), 0, IbpGraph::seed(k))
    }

    pub fn coeff_f64(&self) -> f64 {
        use num_traits::ToPrimitive;
        self.coeff.to_f64().unwrap_or(f64::NAN)
    }
}

pub fn rational(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}
