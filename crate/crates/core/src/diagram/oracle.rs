//! Exact moments of the lattice Gibbs measure on tiny lattices by tensor
//! Gauss-Hermite quadrature, and polynomial observables over them.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, SymmetricEigen};

use super::contract::hermite;
use super::DiagramError;
use crate::lattice::{discrete_laplacian, green_function, wick_constant, LatticeField, TorusLattice};

/// Highest total degree kept in the moment table.
pub const MAX_DEGREE: usize = 8;
/// Nodes per mode for the production table and for the convergence check.
pub const NODES: usize = 40;
pub const CHECK_NODES: usize = 50;
/// Required agreement between the two node counts.
pub const CHECK_TOL: f64 = 1e-8;
const MAX_POINTS: usize = 50_000_000;

/// Gauss-Hermite rule for the weight `exp(-t^2)` via the Golub-Welsch
/// eigenvalue problem. Nodes ascending.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        jac[(i, i - 1)] = b;
        jac[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Polynomial in the site values `Phi(x)`, keyed by exponent vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    n: usize,
    terms: BTreeMap<Vec<u8>, f64>,
}

impl Poly {
    pub fn zero(n_sites: usize) -> Self {
        Self {
            n: n_sites,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n_sites: usize, c: f64) -> Self {
        let mut p = Self::zero(n_sites);
        if c != 0.0 {
            p.terms.insert(vec![0; n_sites], c);
        }
        p
    }

    /// `Phi(site)`.
    pub fn var(n_sites: usize, site: usize) -> Self {
        Self::monomial(n_sites, site, 1, 1.0)
    }

    fn monomial(n_sites: usize, site: usize, e: u8, c: f64) -> Self {
        let mut exps = vec![0; n_sites];
        exps[site] = e;
        let mut p = Self::zero(n_sites);
        p.terms.insert(exps, c);
        p
    }

    /// `:Phi(site)^j:` with Wick constant `a`.
    pub fn wick(n_sites: usize, site: usize, j: u32, a: f64) -> Self {
        // coefficients of He_j(x; a) by the three-term recurrence
        let mut prev = vec![1.0];
        let mut cur = vec![0.0, 1.0];
        if j == 0 {
            return Self::constant(n_sites, 1.0);
        }
        for i in 1..j as usize {
            let mut next = vec![0.0; i + 2];
            for (d, c) in cur.iter().enumerate() {
                next[d + 1] += c;
            }
            for (d, c) in prev.iter().enumerate() {
                next[d] -= i as f64 * a * c;
            }
            prev = cur;
            cur = next;
        }
        let mut p = Self::zero(n_sites);
        for (d, c) in cur.into_iter().enumerate() {
            if c != 0.0 {
                p = p.add(&Self::monomial(n_sites, site, d as u8, c));
            }
        }
        p
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u8], f64)> {
        self.terms.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&x| x as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            *out.terms.entry(e.clone()).or_insert(0.0) += c;
        }
        out.terms.retain(|_, c| *c != 0.0);
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.terms.values_mut().for_each(|c| *c *= s);
        out.terms.retain(|_, c| *c != 0.0);
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.n);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<u8> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                *out.terms.entry(e).or_insert(0.0) += c1 * c2;
            }
        }
        out.terms.retain(|_, c| *c != 0.0);
        out
    }

    /// `d/dPhi(site)`.
    pub fn derivative(&self, site: usize) -> Self {
        let mut out = Self::zero(self.n);
        for (e, c) in &self.terms {
            if e[site] > 0 {
                let mut d = e.clone();
                d[site] -= 1;
                *out.terms.entry(d).or_insert(0.0) += c * e[site] as f64;
            }
        }
        out.terms.retain(|_, c| *c != 0.0);
        out
    }

    /// Value at a field configuration.
    pub fn eval(&self, phi: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(phi).map(|(&k, x)| x.powi(k as i32)).product::<f64>())
            .sum()
    }
}

/// `|L - R| / max(|L|, |R|)` bookkeeping for an identity `L = R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub lhs: f64,
    pub rhs: f64,
}

impl Residual {
    pub fn relative(&self) -> f64 {
        let scale = self.lhs.abs().max(self.rhs.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.lhs - self.rhs).abs() / scale
        }
    }
}

/// Normalized moments of the lattice Gibbs measure, to degree 8, on a
/// lattice with at most 9 sites.
#[derive(Debug, Clone)]
pub struct QuadratureOracle {
    lat: TorusLattice,
    lambda: f64,
    wick_a: f64,
    green: Vec<f64>,
    n_nodes: usize,
    moments: HashMap<Vec<u8>, f64>,
    check_error: Option<f64>,
}

fn monomials(n_sites: usize, max_degree: usize) -> Vec<Vec<u8>> {
    fn rec(site: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if site == cur.len() {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur[site] = e as u8;
            rec(site + 1, left - e, cur, out);
        }
        cur[site] = 0;
    }
    let mut out = Vec::new();
    rec(0, max_degree, &mut vec![0; n_sites], &mut out);
    out.retain(|e| e.iter().map(|&x| x as usize).sum::<usize>() % 2 == 0);
    out
}

impl QuadratureOracle {
    /// Table at 40 nodes per mode, validated against 50 nodes.
    pub fn new(lat: &TorusLattice, lambda: f64) -> Result<Self, DiagramError> {
        let mut q = Self::with_nodes(lat, lambda, NODES)?;
        let check = Self::with_nodes(lat, lambda, CHECK_NODES)?;
        let mut worst: f64 = 0.0;
        for (e, &v) in &q.moments {
            let w = check.moments[e];
            let err = (v - w).abs() / (v.abs().max(w.abs()) + 1e-14);
            worst = worst.max(err);
        }
        if worst > CHECK_TOL {
            return Err(DiagramError::Quadrature(format!(
                "{NODES} and {CHECK_NODES} nodes differ by {worst:e}"
            )));
        }
        q.check_error = Some(worst);
        Ok(q)
    }

    pub fn with_nodes(lat: &TorusLattice, lambda: f64, n_nodes: usize) -> Result<Self, DiagramError> {
        let s = lat.n_sites();
        if s > 9 {
            return Err(DiagramError::OracleTooLarge(s));
        }
        if n_nodes < 2 || !n_nodes.is_multiple_of(2) {
            return Err(DiagramError::Quadrature("node count must be even".into()));
        }
        if (n_nodes as f64).powi(s as i32) / 2.0 > MAX_POINTS as f64 {
            return Err(DiagramError::Quadrature(format!(
                "{n_nodes}^{s} tensor points exceed the budget"
            )));
        }
        let wick_a = wick_constant(lat);
        let cell = lat.cell();
        let m_eff = lat.mass() - 1.5 * lambda * wick_a;

        // quadratic form Q = eps^2 (m_eff - Delta) as a matrix
        let mut qm = DMatrix::<f64>::zeros(s, s);
        for y in 0..s {
            let e = LatticeField::from_fn(lat, |x| if x == y { 1.0 } else { 0.0 });
            let lap = discrete_laplacian(&e);
            for x in 0..s {
                qm[(x, y)] = cell * ((if x == y { m_eff } else { 0.0 }) - lap.at(x));
            }
        }
        let eig = SymmetricEigen::new(qm);
        let floor = 0.25 * cell * lat.mass();
        let q: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let q0: Vec<f64> = q.iter().map(|&v| v.max(floor)).collect();
        let basis = eig.eigenvectors;

        let (t, w) = gauss_hermite(n_nodes);
        let exps = monomials(s, MAX_DEGREE);
        let n_mono = exps.len();
        let flat: Vec<usize> = exps.iter().flatten().map(|&e| e as usize).collect();

        let half = n_nodes / 2;
        let mut sums = vec![0.0; n_mono];
        let mut z = 0.0;
        let mut idx = vec![0usize; s];
        // the first mode runs over positive nodes only: the density and every
        // even monomial are invariant under Phi -> -Phi
        idx[0] = half;
        let scale: Vec<f64> = q0.iter().map(|v| 1.0 / v.sqrt()).collect();
        let mut y = vec![0.0; s];
        let mut phi = vec![0.0; s];
        let mut pw = vec![[0.0f64; MAX_DEGREE + 1]; s];
        loop {
            let mut weight = 2.0;
            let mut tilt = 0.0;
            for k in 0..s {
                y[k] = t[idx[k]] * scale[k];
                weight *= w[idx[k]];
                tilt += (q[k] - q0[k]) * y[k] * y[k];
            }
            let mut quartic = 0.0;
            for (x, p) in phi.iter_mut().enumerate() {
                *p = (0..s).map(|k| basis[(x, k)] * y[k]).sum();
                quartic += p.powi(4);
            }
            weight *= (-tilt - 0.25 * cell * lambda * quartic).exp();
            for x in 0..s {
                pw[x][0] = 1.0;
                for e in 1..=MAX_DEGREE {
                    pw[x][e] = pw[x][e - 1] * phi[x];
                }
            }
            z += weight;
            for (m, sum) in sums.iter_mut().enumerate() {
                let e = &flat[m * s..(m + 1) * s];
                let mut v = weight;
                for x in 0..s {
                    v *= pw[x][e[x]];
                }
                *sum += v;
            }
            // odometer over the tensor grid
            let mut k = s;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < n_nodes {
                    break;
                }
                idx[k] = if k == 0 { n_nodes } else { 0 };
                if k == 0 {
                    break;
                }
            }
            if idx[0] >= n_nodes {
                break;
            }
        }
        if !(z > 0.0) || !z.is_finite() {
            return Err(DiagramError::Quadrature(format!("partition function {z}")));
        }
        let moments = exps
            .into_iter()
            .zip(sums)
            .map(|(e, v)| (e, v / z))
            .collect();
        Ok(Self {
            lat: lat.clone(),
            lambda,
            wick_a,
            green: green_function(lat).into_values(),
            n_nodes,
            moments,
            check_error: None,
        })
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lat
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn wick_a(&self) -> f64 {
        self.wick_a
    }

    pub fn green(&self) -> &[f64] {
        &self.green
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Largest relative moment change between 40 and 50 nodes, if checked.
    pub fn check_error(&self) -> Option<f64> {
        self.check_error
    }

    /// `E[prod_x Phi(x)^{e_x}]`.
    pub fn moment(&self, exps: &[u8]) -> Result<f64, DiagramError> {
        let deg: usize = exps.iter().map(|&e| e as usize).sum();
        if exps.len() != self.lat.n_sites() {
            return Err(DiagramError::InvalidConfig("exponent vector length".into()));
        }
        if deg % 2 == 1 {
            return Ok(0.0);
        }
        if deg > MAX_DEGREE {
            return Err(DiagramError::MomentDegree(deg));
        }
        Ok(self.moments[exps])
    }

    pub fn expect(&self, p: &Poly) -> Result<f64, DiagramError> {
        p.terms().map(|(e, c)| Ok(c * self.moment(e)?)).sum()
    }

    fn c(&self, x: usize, z: usize) -> f64 {
        self.green[self.lat.sub(x, z)]
    }

    fn var(&self, x: usize) -> Poly {
        Poly::var(self.lat.n_sites(), x)
    }

    /// `E[Phi(x) Phi(y)]`.
    pub fn two_point(&self, x: usize, y: usize) -> Result<f64, DiagramError> {
        self.expect(&self.var(x).mul(&self.var(y)))
    }

    /// `E[prod_i Phi(x_i)]`.
    pub fn correlation(&self, points: &[usize]) -> Result<f64, DiagramError> {
        let n = self.lat.n_sites();
        let p = points
            .iter()
            .fold(Poly::constant(n, 1.0), |acc, &x| acc.mul(&Poly::var(n, x)));
        self.expect(&p)
    }

    /// `lambda I(:Phi^3:)(x) = lambda eps^2 sum_w C(x - w) :Phi(w)^3:`.
    pub fn green_cubic(&self, x: usize) -> Poly {
        let n = self.lat.n_sites();
        let cell = self.lat.cell();
        (0..n).fold(Poly::zero(n), |acc, w| {
            acc.add(&Poly::wick(n, w, 3, self.wick_a).scale(self.lambda * cell * self.c(x, w)))
        })
    }

    /// Both sides of
    /// `sum_z C(x - z) E[dF/dPhi(z)] = E[Phi(x) F] + lambda eps^2 sum_z C(x - z) E[F :Phi(z)^3:]`.
    pub fn ibp_residual(&self, f: &Poly, x: usize) -> Result<Residual, DiagramError> {
        let n = self.lat.n_sites();
        let cell = self.lat.cell();
        let mut lhs = 0.0;
        let mut tail = 0.0;
        for z in 0..n {
            lhs += self.c(x, z) * self.expect(&f.derivative(z))?;
            tail += cell * self.c(x, z) * self.expect(&f.mul(&Poly::wick(n, z, 3, self.wick_a)))?;
        }
        let rhs = self.expect(&self.var(x).mul(f))? + self.lambda * tail;
        Ok(Residual { lhs, rhs })
    }

    /// `E[:Phi(x)^2:] = -lambda E[Phi(x) I(:Phi^3:)(x)]`.
    pub fn ephi2_residual(&self, x: usize) -> Result<Residual, DiagramError> {
        let n = self.lat.n_sites();
        let lhs = self.expect(&Poly::wick(n, x, 2, self.wick_a))?;
        let rhs = -self.expect(&self.var(x).mul(&self.green_cubic(x)))?;
        Ok(Residual { lhs, rhs })
    }

    /// Sample-free check value: `E[f]` for a pointwise function via the
    /// polynomial interface, used by tests comparing with Monte Carlo.
    pub fn wick_moment(&self, j: u32) -> Result<f64, DiagramError> {
        self.expect(&Poly::wick(self.lat.n_sites(), 0, j, self.wick_a))
    }
}

/// Hermite polynomial evaluation and the polynomial expansion agree.
pub fn hermite_consistent(j: u32, x: f64, a: f64) -> bool {
    let p = Poly::wick(1, 0, j, a);
    (p.eval(&[x]) - hermite(j, x, a)).abs() <= 1e-12 * (1.0 + x.abs()).powi(j as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_by_two(mass: f64) -> TorusLattice {
        TorusLattice::new(2.0, 1.0, mass).unwrap()
    }

    #[test]
    fn gauss_hermite_integrates_polynomials() {
        let (t, w) = gauss_hermite(10);
        let sp = std::f64::consts::PI.sqrt();
        let m0: f64 = w.iter().sum();
        let m2: f64 = t.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let m8: f64 = t.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert_relative_eq!(m0, sp, max_relative = 1e-13);
        assert_relative_eq!(m2, sp / 2.0, max_relative = 1e-13);
        assert_relative_eq!(m8, sp * 105.0 / 16.0, max_relative = 1e-12);
        assert!(t.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn monomial_count() {
        assert_eq!(monomials(4, 8).len(), 1 + 10 + 35 + 84 + 165);
    }

    #[test]
    fn wick_polynomials() {
        for j in 0..6 {
            for x in [-1.3, 0.0, 0.4, 2.2] {
                assert!(hermite_consistent(j, x, 0.37));
            }
        }
        let p = Poly::wick(2, 1, 3, 0.5);
        assert_eq!(p.degree(), 3);
        assert_relative_eq!(p.eval(&[9.0, 2.0]), 8.0 - 3.0 * 0.5 * 2.0);
    }

    #[test]
    fn poly_algebra() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = x.mul(&x).mul(&y).add(&y.scale(-2.0));
        assert_relative_eq!(p.eval(&[3.0, 2.0]), 18.0 - 4.0);
        assert_relative_eq!(p.derivative(0).eval(&[3.0, 2.0]), 12.0);
        assert_relative_eq!(p.derivative(1).eval(&[3.0, 2.0]), 9.0 - 2.0);
        assert!(p.add(&p.scale(-1.0)).terms().next().is_none());
    }

    #[test]
    fn gaussian_case_reproduces_green_function() {
        let lat = two_by_two(1.0);
        let q = QuadratureOracle::new(&lat, 0.0).unwrap();
        let c = green_function(&lat);
        for x in 0..4 {
            for y in 0..4 {
                assert_relative_eq!(
                    q.two_point(x, y).unwrap(),
                    c.at(lat.sub(x, y)),
                    max_relative = 1e-8
                );
            }
        }
        // Gaussian fourth moment
        let a = q.wick_a();
        assert_relative_eq!(q.moment(&[4, 0, 0, 0]).unwrap(), 3.0 * a * a, max_relative = 1e-8);
        assert!(q.check_error().unwrap() < CHECK_TOL);
    }

    #[test]
    fn odd_moments_vanish_and_degree_is_capped() {
        let lat = two_by_two(1.0);
        let q = QuadratureOracle::with_nodes(&lat, 0.1, 20).unwrap();
        assert_eq!(q.moment(&[1, 2, 0, 0]).unwrap(), 0.0);
        assert_eq!(q.moment(&[3, 0, 0, 0]).unwrap(), 0.0);
        assert_eq!(q.moment(&[10, 0, 0, 0]), Err(DiagramError::MomentDegree(10)));
    }

    #[test]
    fn wick_square_starts_at_second_order() {
        let lat = two_by_two(1.0);
        let a = QuadratureOracle::with_nodes(&lat, 0.1, 30).unwrap();
        let b = QuadratureOracle::with_nodes(&lat, 0.2, 30).unwrap();
        let w2a = a.wick_moment(2).unwrap();
        let w2b = b.wick_moment(2).unwrap();
        // the first-order term vanishes by Gaussian orthogonality
        let ratio = w2b / w2a;
        assert!(w2a > 0.0 && (3.0..4.5).contains(&ratio), "{w2a} {w2b}");
    }

    #[test]
    fn rejects_large_lattices() {
        let lat = TorusLattice::new(4.0, 1.0, 1.0).unwrap();
        assert_eq!(
            QuadratureOracle::with_nodes(&lat, 0.1, 10).unwrap_err(),
            DiagramError::OracleTooLarge(16)
        );
    }

    #[test]
    fn ibp_with_single_field() {
        let lat = two_by_two(1.0);
        let q = QuadratureOracle::new(&lat, 0.1).unwrap();
        let r = q.ibp_residual(&Poly::var(4, 3), 0).unwrap();
        assert!(r.relative() < 1e-7, "{r:?}");
        let r = q.ephi2_residual(0).unwrap();
        assert!(r.relative() < 1e-7, "{r:?}");
    }
}
