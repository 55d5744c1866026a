//! Variable-elimination contraction of diagram integrals on the lattice.
//!
//! A graph with boundary offsets compiles into a [`Plan`]: a constant times a
//! product of scalar sums over lattice functions. The lattice functions live
//! in a hash-consed node arena, so kernels shared between plans (and, for
//! sample-independent nodes, between samples) are computed once.
//!
//! Boundary points sit at `b + o_i`. In [`Mode::Pinned`] the base `b` is the
//! origin; in [`Mode::Averaged`] it is summed with weight `1/n_sites`, which
//! is the exact translation average of a single sample.

use std::collections::HashMap;

use crate::graph::IbpGraph;
use crate::lattice::{correlate_raw, green_function, TorusLattice};

use super::DiagramError;

pub type NodeId = usize;

/// `s -> node(s - shift)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SRef {
    pub node: NodeId,
    pub shift: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Node {
    /// `C^m`.
    Green(u32),
    /// `:Phi^j:` of the current sample (`j = 1` is the field itself).
    Wick(u32),
    /// Pointwise product; the first factor is unshifted.
    Mul(Vec<SRef>),
    /// `y -> sum_v h(v) k(v - y)`.
    Corr(NodeId, NodeId),
    /// `s -> f(-s)`.
    Reflect(NodeId),
    /// `D[w1][w2] = sum_v u(v) k1(v - w1) k2(v - w2)`, stored row-major.
    Dense {
        unary: SRef,
        k1: SRef,
        k2: SRef,
    },
    /// `w -> sum_v u(v) D'(v, w) prod k(v - w)`, `D' = D` or its transpose.
    DenseContract {
        dense: NodeId,
        transpose: bool,
        unary: Option<SRef>,
        kernels: Vec<SRef>,
    },
}

/// `sum_s prod_i f_i(s)` or a point evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum ScalarOp {
    Dot(Vec<SRef>),
    Point(SRef, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Pinned,
    Averaged,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub mode: Mode,
    /// Largest lattice (in sites) on which dense two-variable factors are built.
    pub max_dense_sites: usize,
    /// Largest cyclomatic number accepted.
    pub loop_budget: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Pinned,
            max_dense_sites: 1024,
            loop_budget: 3,
        }
    }
}

#[derive(Debug, Clone)]
struct Plan {
    constant: f64,
    scalars: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Grid {
    shift: u32,
    mask: usize,
}

impl Grid {
    fn new(n: usize) -> Self {
        Self {
            shift: n.trailing_zeros(),
            mask: n - 1,
        }
    }

    #[inline]
    fn sub(self, s: usize, o: usize) -> usize {
        let i = (s >> self.shift).wrapping_sub(o >> self.shift) & self.mask;
        let j = (s & self.mask).wrapping_sub(o & self.mask) & self.mask;
        (i << self.shift) | j
    }

    #[inline]
    fn add(self, s: usize, o: usize) -> usize {
        let i = ((s >> self.shift) + (o >> self.shift)) & self.mask;
        let j = ((s & self.mask) + (o & self.mask)) & self.mask;
        (i << self.shift) | j
    }

    fn neg(self, s: usize) -> usize {
        self.sub(0, s)
    }
}

/// Compiles graphs into plans and evaluates them, optionally against a field sample.
pub struct Contractor {
    lat: TorusLattice,
    grid: Grid,
    n_sites: usize,
    green: Vec<f64>,
    wick_a: f64,
    opts: EvalOptions,
    nodes: Vec<Node>,
    node_index: HashMap<Node, NodeId>,
    sample_dep: Vec<bool>,
    values: Vec<Vec<f64>>,
    scalars: Vec<ScalarOp>,
    scalar_index: HashMap<ScalarOp, usize>,
    scalar_values: Vec<Option<f64>>,
    plans: Vec<Plan>,
    sample_field: Option<Vec<f64>>,
}

type Var = usize;

#[derive(Debug, Clone)]
enum Kern {
    Shift(SRef),
    Dense(NodeId),
}

/// `kernel(x_a - x_b)` for shift kernels, `D[x_a][x_b]` for dense ones.
#[derive(Debug, Clone)]
struct PairF {
    a: Var,
    b: Var,
    kernel: Kern,
}

impl Contractor {
    pub fn new(lat: &TorusLattice, wick_a: f64, opts: EvalOptions) -> Self {
        let green = green_function(lat).into_values();
        Self {
            lat: lat.clone(),
            grid: Grid::new(lat.n()),
            n_sites: lat.n_sites(),
            green,
            wick_a,
            opts,
            nodes: Vec::new(),
            node_index: HashMap::new(),
            sample_dep: Vec::new(),
            values: Vec::new(),
            scalars: Vec::new(),
            scalar_index: HashMap::new(),
            scalar_values: Vec::new(),
            plans: Vec::new(),
            sample_field: None,
        }
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lat
    }

    pub fn options(&self) -> &EvalOptions {
        &self.opts
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn plan_count(&self) -> usize {
        self.plans.len()
    }

    fn intern(&mut self, node: Node) -> NodeId {
        if let Some(&id) = self.node_index.get(&node) {
            return id;
        }
        let dep = match &node {
            Node::Green(_) => false,
            Node::Wick(_) => true,
            Node::Mul(fs) => fs.iter().any(|f| self.sample_dep[f.node]),
            Node::Corr(a, b) => self.sample_dep[*a] || self.sample_dep[*b],
            Node::Reflect(a) => self.sample_dep[*a],
            Node::Dense { unary, k1, k2 } => {
                self.sample_dep[unary.node] || self.sample_dep[k1.node] || self.sample_dep[k2.node]
            }
            Node::DenseContract {
                dense,
                unary,
                kernels,
                ..
            } => {
                self.sample_dep[*dense]
                    || unary.is_some_and(|u| self.sample_dep[u.node])
                    || kernels.iter().any(|k| self.sample_dep[k.node])
            }
        };
        let id = self.nodes.len();
        self.nodes.push(node.clone());
        self.node_index.insert(node, id);
        self.sample_dep.push(dep);
        self.values.push(Vec::new());
        id
    }

    fn leaf(&mut self, node: Node) -> SRef {
        SRef {
            node: self.intern(node),
            shift: 0,
        }
    }

    fn shifted(&self, r: SRef, by: usize) -> SRef {
        SRef {
            node: r.node,
            shift: self.grid.add(r.shift, by),
        }
    }

    fn reflect(&mut self, r: SRef) -> SRef {
        let node = match self.nodes[r.node] {
            // every power of C is even
            Node::Green(_) => r.node,
            Node::Reflect(inner) => inner,
            _ => self.intern(Node::Reflect(r.node)),
        };
        SRef {
            node,
            shift: self.grid.neg(r.shift),
        }
    }

    fn mul(&mut self, mut fs: Vec<SRef>) -> SRef {
        assert!(!fs.is_empty());
        if fs.len() == 1 {
            return fs[0];
        }
        // flatten nested products
        let mut flat = Vec::with_capacity(fs.len());
        for f in fs.drain(..) {
            match &self.nodes[f.node] {
                Node::Mul(inner) => {
                    for g in inner.clone() {
                        flat.push(self.shifted(g, f.shift));
                    }
                }
                _ => flat.push(f),
            }
        }
        flat.sort();
        let base = flat[0].shift;
        let mut rel: Vec<SRef> = flat
            .iter()
            .map(|f| SRef {
                node: f.node,
                shift: self.grid.sub(f.shift, base),
            })
            .collect();
        rel.sort();
        SRef {
            node: self.intern(Node::Mul(rel)),
            shift: base,
        }
    }

    /// `Corr(Shift(h, a), Shift(k, b)) = Shift(Corr(h, k), a - b)`.
    fn corr(&mut self, h: SRef, k: SRef) -> SRef {
        SRef {
            node: self.intern(Node::Corr(h.node, k.node)),
            shift: self.grid.sub(h.shift, k.shift),
        }
    }

    fn scalar(&mut self, op: ScalarOp) -> usize {
        if let Some(&id) = self.scalar_index.get(&op) {
            return id;
        }
        let id = self.scalars.len();
        self.scalars.push(op.clone());
        self.scalar_index.insert(op, id);
        self.scalar_values.push(None);
        id
    }

    fn scalar_dep(&self, op: &ScalarOp) -> bool {
        match op {
            ScalarOp::Dot(fs) => fs.iter().any(|f| self.sample_dep[f.node]),
            ScalarOp::Point(f, _) => self.sample_dep[f.node],
        }
    }

    /// Compiles `I_G` with boundary vertex `i` at `b + offsets[i]`.
    pub fn compile(&mut self, g: &IbpGraph, offsets: &[usize]) -> Result<usize, DiagramError> {
        if offsets.len() != g.k() {
            return Err(DiagramError::ConfigArity {
                expected: g.k(),
                got: offsets.len(),
            });
        }
        if offsets.iter().any(|&o| o >= self.n_sites) {
            return Err(DiagramError::InvalidConfig("offset outside the lattice".into()));
        }
        let loops = cyclomatic(g);
        if loops > self.opts.loop_budget {
            return Err(DiagramError::Budget(format!(
                "{loops} loops exceed the budget of {}",
                self.opts.loop_budget
            )));
        }
        let k = g.k();
        let l = g.interior_count();
        let averaged = self.opts.mode == Mode::Averaged;
        let base: Var = l;
        let n_vars = if averaged { l + 1 } else { l };
        let cell = self.lat.cell();

        let mut unary: Vec<(Var, SRef)> = Vec::new();
        let mut pairs: Vec<PairF> = Vec::new();
        let mut ops: Vec<ScalarOp> = Vec::new();
        let mut constant = cell.powi(l as i32);
        if averaged {
            constant /= self.n_sites as f64;
        }

        let c1 = self.leaf(Node::Green(1));
        for ((u, v), m) in g.multiplicities() {
            match (u < k, v < k) {
                (true, true) => {
                    let d = self.grid.sub(offsets[u], offsets[v]);
                    ops.push(ScalarOp::Point(self.leaf(Node::Green(m as u32)), d));
                }
                (true, false) | (false, true) => {
                    let (bdy, z) = if u < k { (u, v - k) } else { (v, u - k) };
                    let kern = self.leaf(Node::Green(m as u32));
                    let kern = self.shifted(kern, offsets[bdy]);
                    if averaged {
                        pairs.push(PairF {
                            a: z,
                            b: base,
                            kernel: Kern::Shift(kern),
                        });
                    } else {
                        unary.push((z, kern));
                    }
                }
                (false, false) => {
                    let kern = if m == 1 {
                        c1
                    } else {
                        self.leaf(Node::Green(m as u32))
                    };
                    pairs.push(PairF {
                        a: u - k,
                        b: v - k,
                        kernel: Kern::Shift(kern),
                    });
                }
            }
        }
        for v in 0..g.vertex_count() {
            let j = g.insertions(v);
            if j == 0 {
                continue;
            }
            let w = self.leaf(Node::Wick(j as u32));
            if v < k {
                if averaged {
                    let neg = self.grid.neg(offsets[v]);
                    unary.push((base, self.shifted(w, neg)));
                } else {
                    ops.push(ScalarOp::Point(w, offsets[v]));
                }
            } else {
                unary.push((v - k, w));
            }
        }

        let mut alive: Vec<bool> = vec![true; n_vars];
        for _ in 0..n_vars {
            let v = self.pick_var(&alive, &unary, &pairs);
            alive[v] = false;
            let my_unary: Vec<SRef> = take_where(&mut unary, |(w, _)| *w == v)
                .into_iter()
                .map(|(_, f)| f)
                .collect();
            let mine = take_where(&mut pairs, |p| p.a == v || p.b == v);
            // group pair factors by neighbor
            let mut groups: Vec<(Var, Vec<PairF>)> = Vec::new();
            for p in mine {
                let w = if p.a == v { p.b } else { p.a };
                match groups.iter_mut().find(|(x, _)| *x == w) {
                    Some((_, ps)) => ps.push(p),
                    None => groups.push((w, vec![p])),
                }
            }
            groups.sort_by_key(|(w, _)| *w);
            let u = if my_unary.is_empty() {
                None
            } else {
                Some(self.mul(my_unary))
            };
            let any_dense = groups
                .iter()
                .any(|(_, ps)| ps.iter().any(|p| matches!(p.kernel, Kern::Dense(_))));
            if any_dense {
                if groups.len() != 1 {
                    return Err(DiagramError::Budget(
                        "dense factor with more than one neighbor".into(),
                    ));
                }
                let (w, ps) = groups.pop().expect("one group");
                let mut dense = None;
                let mut kernels = Vec::new();
                for p in ps {
                    match p.kernel {
                        Kern::Dense(id) => {
                            if dense.is_some() {
                                return Err(DiagramError::Budget(
                                    "two dense factors on one pair".into(),
                                ));
                            }
                            dense = Some((id, p.b == v));
                        }
                        Kern::Shift(kr) => kernels.push(self.oriented(kr, &p, v)),
                    }
                }
                let (dense, transpose) = dense.expect("checked");
                kernels.sort();
                let node = self.intern(Node::DenseContract {
                    dense,
                    transpose,
                    unary: u,
                    kernels,
                });
                unary.push((w, SRef { node, shift: 0 }));
            } else {
                // combined kernel per neighbor, oriented as K(x_v - x_w)
                let mut nbrs: Vec<(Var, SRef)> = Vec::new();
                for (w, ps) in groups {
                    let ks: Vec<SRef> = ps
                        .iter()
                        .map(|p| match p.kernel {
                            Kern::Shift(kr) => kr,
                            Kern::Dense(_) => unreachable!(),
                        })
                        .zip(ps.iter())
                        .map(|(kr, p)| self.oriented(kr, p, v))
                        .collect();
                    let kk = self.mul(ks);
                    nbrs.push((w, kk));
                }
                match (nbrs.len(), u) {
                    (0, None) => constant *= self.n_sites as f64,
                    (0, Some(u)) => ops.push(ScalarOp::Dot(vec![u])),
                    (1, None) => ops.push(ScalarOp::Dot(vec![nbrs[0].1])),
                    (1, Some(u)) => {
                        let r = self.corr(u, nbrs[0].1);
                        unary.push((nbrs[0].0, r));
                    }
                    (2, None) => {
                        let (w1, k1) = nbrs[0];
                        let (w2, k2) = nbrs[1];
                        let r = self.corr(k1, k2);
                        pairs.push(PairF {
                            a: w2,
                            b: w1,
                            kernel: Kern::Shift(r),
                        });
                    }
                    (2, Some(u)) => {
                        if self.n_sites > self.opts.max_dense_sites {
                            return Err(DiagramError::Budget(format!(
                                "dense factor on {} sites exceeds {}",
                                self.n_sites, self.opts.max_dense_sites
                            )));
                        }
                        let (w1, k1) = nbrs[0];
                        let (w2, k2) = nbrs[1];
                        let node = self.intern(Node::Dense { unary: u, k1, k2 });
                        pairs.push(PairF {
                            a: w1,
                            b: w2,
                            kernel: Kern::Dense(node),
                        });
                    }
                    (d, _) => {
                        return Err(DiagramError::Budget(format!(
                            "vertex with {d} distinct neighbors left after elimination"
                        )))
                    }
                }
            }
        }
        debug_assert!(unary.is_empty() && pairs.is_empty());

        // sample-independent scalars are folded into the constant right away
        let mut dep_ids = Vec::new();
        for op in ops {
            if self.scalar_dep(&op) {
                dep_ids.push(self.scalar(op));
            } else {
                let id = self.scalar(op);
                constant *= self.scalar_value(id)?;
            }
        }
        dep_ids.sort_unstable();
        self.plans.push(Plan {
            constant,
            scalars: dep_ids,
        });
        Ok(self.plans.len() - 1)
    }

    /// The kernel of `p` as a function of `x_v - x_w`.
    fn oriented(&mut self, kr: SRef, p: &PairF, v: Var) -> SRef {
        if p.a == v {
            kr
        } else {
            self.reflect(kr)
        }
    }

    fn pick_var(&self, alive: &[bool], unary: &[(Var, SRef)], pairs: &[PairF]) -> Var {
        let mut best: Option<((usize, bool, Var), Var)> = None;
        for v in (0..alive.len()).filter(|&v| alive[v]) {
            let mut nbrs: Vec<Var> = pairs
                .iter()
                .filter(|p| p.a == v || p.b == v)
                .map(|p| if p.a == v { p.b } else { p.a })
                .collect();
            nbrs.sort_unstable();
            nbrs.dedup();
            let has_unary = unary.iter().any(|(w, _)| *w == v);
            let key = (nbrs.len(), has_unary, v);
            if best.is_none_or(|(b, _)| key < b) {
                best = Some((key, v));
            }
        }
        best.expect("a live variable").1
    }

    /// Drops all sample-dependent values and installs a new field sample.
    pub fn load_sample(&mut self, phi: &[f64]) {
        assert_eq!(phi.len(), self.n_sites);
        for id in 0..self.nodes.len() {
            if self.sample_dep[id] {
                self.values[id].clear();
            }
        }
        for i in 0..self.scalars.len() {
            if self.scalar_dep(&self.scalars[i]) {
                self.scalar_values[i] = None;
            }
        }
        match &mut self.sample_field {
            Some(f) => f.copy_from_slice(phi),
            None => self.sample_field = Some(phi.to_vec()),
        }
    }

    /// Value of a compiled plan on the loaded sample (if any).
    pub fn value(&mut self, plan: usize) -> Result<f64, DiagramError> {
        let p = self.plans[plan].clone();
        let mut v = p.constant;
        for id in p.scalars {
            v *= self.scalar_value(id)?;
        }
        Ok(v)
    }

    fn scalar_value(&mut self, id: usize) -> Result<f64, DiagramError> {
        if let Some(v) = self.scalar_values[id] {
            return Ok(v);
        }
        let op = self.scalars[id].clone();
        let v = match &op {
            ScalarOp::Dot(fs) => {
                for f in fs {
                    self.ensure(f.node)?;
                }
                let grid = self.grid;
                let mut acc = 0.0;
                for s in 0..self.n_sites {
                    let mut prod = 1.0;
                    for f in fs {
                        prod *= self.values[f.node][grid.sub(s, f.shift)];
                    }
                    acc += prod;
                }
                acc
            }
            ScalarOp::Point(f, site) => {
                self.ensure(f.node)?;
                self.values[f.node][self.grid.sub(*site, f.shift)]
            }
        };
        self.scalar_values[id] = Some(v);
        Ok(v)
    }

    fn ensure(&mut self, id: NodeId) -> Result<(), DiagramError> {
        if !self.values[id].is_empty() {
            return Ok(());
        }
        let node = self.nodes[id].clone();
        let n = self.n_sites;
        let grid = self.grid;
        let out: Vec<f64> = match node {
            Node::Green(m) => self.green.iter().map(|c| c.powi(m as i32)).collect(),
            Node::Wick(j) => {
                let phi = self
                    .sample_field
                    .as_ref()
                    .ok_or(DiagramError::MissingSample)?;
                phi.iter().map(|&x| hermite(j, x, self.wick_a)).collect()
            }
            Node::Mul(fs) => {
                for f in &fs {
                    self.ensure(f.node)?;
                }
                (0..n)
                    .map(|s| {
                        fs.iter()
                            .map(|f| self.values[f.node][grid.sub(s, f.shift)])
                            .product()
                    })
                    .collect()
            }
            Node::Corr(h, k) => {
                self.ensure(h)?;
                self.ensure(k)?;
                correlate_raw(&self.lat, &self.values[h], &self.values[k])
            }
            Node::Reflect(a) => {
                self.ensure(a)?;
                (0..n).map(|s| self.values[a][grid.neg(s)]).collect()
            }
            Node::Dense { unary, k1, k2 } => {
                for r in [unary, k1, k2] {
                    self.ensure(r.node)?;
                }
                let mut out = vec![0.0; n * n];
                let k2v = shifted_values(&self.values[k2.node], k2.shift, grid);
                for w1 in 0..n {
                    let g: Vec<f64> = (0..n)
                        .map(|v| {
                            self.values[unary.node][grid.sub(v, unary.shift)]
                                * self.values[k1.node][grid.sub(grid.sub(v, w1), k1.shift)]
                        })
                        .collect();
                    let row = correlate_raw(&self.lat, &g, &k2v);
                    out[w1 * n..(w1 + 1) * n].copy_from_slice(&row);
                }
                out
            }
            Node::DenseContract {
                dense,
                transpose,
                unary,
                kernels,
            } => {
                self.ensure(dense)?;
                if let Some(u) = unary {
                    self.ensure(u.node)?;
                }
                for kr in &kernels {
                    self.ensure(kr.node)?;
                }
                let d = &self.values[dense];
                let mut out = vec![0.0; n];
                for (w, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for v in 0..n {
                        let mut t = if transpose { d[w * n + v] } else { d[v * n + w] };
                        if let Some(u) = unary {
                            t *= self.values[u.node][grid.sub(v, u.shift)];
                        }
                        for kr in &kernels {
                            t *= self.values[kr.node][grid.sub(grid.sub(v, w), kr.shift)];
                        }
                        acc += t;
                    }
                    *o = acc;
                }
                out
            }
        };
        if out.iter().any(|x| !x.is_finite()) {
            return Err(DiagramError::NonFinite);
        }
        self.values[id] = out;
        Ok(())
    }
}

fn shifted_values(v: &[f64], shift: usize, grid: Grid) -> Vec<f64> {
    (0..v.len()).map(|s| v[grid.sub(s, shift)]).collect()
}

fn take_where<T>(v: &mut Vec<T>, pred: impl Fn(&T) -> bool) -> Vec<T> {
    let mut taken = Vec::new();
    let mut i = 0;
    while i < v.len() {
        if pred(&v[i]) {
            taken.push(v.remove(i));
        } else {
            i += 1;
        }
    }
    taken
}

/// Cyclomatic number `E - V + components`.
pub fn cyclomatic(g: &IbpGraph) -> usize {
    let n = g.vertex_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut comps = n;
    for e in g.edges() {
        let (a, b) = (find(&mut parent, e.a), find(&mut parent, e.b));
        if a != b {
            parent[a] = b;
            comps -= 1;
        }
    }
    g.edges().len() + comps - n
}

/// Wick power `:x^j:` with variance `a` (probabilists' Hermite polynomial).
pub fn hermite(j: u32, x: f64, a: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if j == 0 {
        return 1.0;
    }
    for i in 1..j {
        let next = x * cur - i as f64 * a * prev;
        prev = cur;
        cur = next;
    }
    cur
}
