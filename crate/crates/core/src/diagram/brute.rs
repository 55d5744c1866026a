//! Direct-summation reference values of `I_G` on small lattices.
//!
//! Every interior placement is enumerated, so cost is `n_sites^l`. These
//! exist to check the contraction engine and the expansion identity.

use super::oracle::{Poly, QuadratureOracle, Residual};
use super::{eval_pure_terms, BoundaryConfigs, DiagramError};
use crate::graph::{Expansion, IbpGraph, Term};
use crate::lattice::{green_function, TorusLattice};

const MAX_PLACEMENTS: usize = 20_000_000;

fn placements(g: &IbpGraph, n_sites: usize, offsets: &[usize], mut visit: impl FnMut(&[usize])) -> Result<(), DiagramError> {
    let k = g.k();
    if offsets.len() != k {
        return Err(DiagramError::ConfigArity {
            expected: k,
            got: offsets.len(),
        });
    }
    if offsets.iter().any(|&o| o >= n_sites) {
        return Err(DiagramError::InvalidConfig("offset outside the lattice".into()));
    }
    let l = g.interior_count();
    let total = (n_sites as f64).powi(l as i32);
    if total > MAX_PLACEMENTS as f64 {
        return Err(DiagramError::Budget(format!("{total} placements")));
    }
    let mut pos: Vec<usize> = offsets.to_vec();
    pos.resize(k + l, 0);
    loop {
        visit(&pos);
        let mut v = k + l;
        loop {
            if v == k {
                return Ok(());
            }
            v -= 1;
            pos[v] += 1;
            if pos[v] < n_sites {
                break;
            }
            pos[v] = 0;
        }
    }
}

fn edge_weight(g: &IbpGraph, lat: &TorusLattice, c: &[f64], pos: &[usize]) -> f64 {
    g.edges()
        .iter()
        .map(|e| c[lat.sub(pos[e.a], pos[e.b])])
        .product()
}

/// `I_G` of a pure graph with boundary vertex `i` at `offsets[i]`.
pub fn brute_pure(g: &IbpGraph, lat: &TorusLattice, offsets: &[usize]) -> Result<f64, DiagramError> {
    if !g.is_pure() {
        return Err(DiagramError::NotPure(crate::graph::n_phi(g)));
    }
    let c = green_function(lat).into_values();
    let mut sum = 0.0;
    placements(g, lat.n_sites(), offsets, |pos| sum += edge_weight(g, lat, &c, pos))?;
    Ok(sum * lat.cell().powi(g.interior_count() as i32))
}

/// `I_G` with insertions, its expectation taken exactly under the oracle measure.
pub fn brute_mixed(g: &IbpGraph, oracle: &QuadratureOracle, offsets: &[usize]) -> Result<f64, DiagramError> {
    let lat = oracle.lattice();
    let n = lat.n_sites();
    let a = oracle.wick_a();
    let c = oracle.green();
    let mut poly = Poly::zero(n);
    placements(g, n, offsets, |pos| {
        let w = edge_weight(g, lat, c, pos);
        if w == 0.0 {
            return;
        }
        let mut p = Poly::constant(n, w);
        for (v, &x) in pos.iter().enumerate() {
            let j = g.insertions(v);
            if j > 0 {
                p = p.mul(&Poly::wick(n, x, j as u32, a));
            }
        }
        poly = poly.add(&p);
    })?;
    Ok(oracle.expect(&poly)? * lat.cell().powi(g.interior_count() as i32))
}

/// `sum_t coeff_t lambda^{p_t} I_{G_t}` by brute force under the oracle.
pub fn brute_terms(terms: &[Term], oracle: &QuadratureOracle, offsets: &[usize]) -> Result<f64, DiagramError> {
    terms
        .iter()
        .map(|t| {
            Ok(t.coeff_f64() * oracle.lambda().powi(t.lambda_power as i32) * brute_mixed(&t.graph, oracle, offsets)?)
        })
        .sum()
}

/// Both sides of the truncated expansion identity
/// `E[prod Phi(x_i)] - sum_{n <= N} lambda^n F_n / n! = R_{N+1}` at one placement.
pub fn expansion_residual(
    exp: &Expansion,
    oracle: &QuadratureOracle,
    offsets: &[usize],
) -> Result<Residual, DiagramError> {
    let lat = oracle.lattice();
    let configs = BoundaryConfigs::new(vec![offsets.to_vec()]);
    let mut lhs = oracle.correlation(offsets)?;
    for (n, terms) in exp.f_terms.iter().enumerate() {
        if terms.is_empty() {
            continue;
        }
        let v = eval_pure_terms(terms, lat, &configs)?.values[0];
        lhs -= oracle.lambda().powi(n as i32) * v;
    }
    let rhs = brute_terms(&exp.remainder_terms, oracle, offsets)?;
    Ok(Residual { lhs, rhs })
}
