//! Numerical values of diagram integrals `I_G`.
//!
//! Pure diagrams (no field insertions) are evaluated deterministically by the
//! contraction engine. Diagrams with Wick-power insertions are estimated from
//! field samples, one contraction per sample. A tensor Gauss-Hermite oracle on
//! the 2x2 lattice provides exact moments for cross-checks.

pub mod brute;
mod contract;
pub mod oracle;

pub use contract::{cyclomatic, hermite, Contractor, EvalOptions, Mode};
pub use oracle::{Poly, QuadratureOracle};

use thiserror::Error;

use crate::graph::{n_phi, IbpGraph, Term};
use crate::lattice::{wick_constant, LatticeField, TorusLattice};
use crate::stats::{batch_means, BatchError};

#[derive(Debug, Error, PartialEq)]
pub enum DiagramError {
    #[error("evaluation budget exceeded: {0}")]
    Budget(String),
    #[error("graph has {0} free field insertions; a pure diagram is required")]
    NotPure(i64),
    #[error("configuration has {got} points, graph has {expected} boundary vertices")]
    ConfigArity { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("graph needs a field sample but none was loaded")]
    MissingSample,
    #[error("non-finite value during contraction")]
    NonFinite,
    #[error(transparent)]
    Batches(#[from] BatchError),
    #[error("oracle lattice has {0} sites; at most 9 are supported")]
    OracleTooLarge(usize),
    #[error("monomial of degree {0} exceeds the moment table")]
    MomentDegree(usize),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
}

/// Boundary placements: `configs[c][i]` is the site offset of `x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConfigs {
    pub configs: Vec<Vec<usize>>,
}

impl BoundaryConfigs {
    pub fn new(configs: Vec<Vec<usize>>) -> Self {
        Self { configs }
    }

    /// `x_1 = 0`, `x_2 = r` for every site `r`, in site order.
    pub fn all_separations(lat: &TorusLattice) -> Self {
        Self::new((0..lat.n_sites()).map(|r| vec![0, r]).collect())
    }

    /// All points at the origin.
    pub fn coincident(k: usize) -> Self {
        Self::new(vec![vec![0; k]])
    }

    /// Four-point placements: the coincident one, then `x_1 = 0` with
    /// `x_2, x_3, x_4` on a coarse sub-grid of stride `stride` sites.
    pub fn four_point_grid(lat: &TorusLattice, stride: usize, max: usize) -> Self {
        let n = lat.n();
        let pts: Vec<usize> = (0..n)
            .step_by(stride.max(1))
            .flat_map(|i| (0..n).step_by(stride.max(1)).map(move |j| (i, j)))
            .map(|(i, j)| lat.site(i, j))
            .collect();
        let mut configs = vec![vec![0; 4]];
        'outer: for &a in &pts {
            for &b in &pts {
                for &c in &pts {
                    if configs.len() >= max {
                        break 'outer;
                    }
                    let cfg = vec![0, a, b, c];
                    if !configs.contains(&cfg) {
                        configs.push(cfg);
                    }
                }
            }
        }
        Self::new(configs)
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
}

/// Values of a diagram (or sum of diagrams) on a list of boundary placements.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagramValue {
    pub configs: BoundaryConfigs,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl DiagramValue {
    pub fn deterministic(configs: BoundaryConfigs, values: Vec<f64>) -> Self {
        let stderr = vec![0.0; values.len()];
        Self {
            configs,
            values,
            stderr,
        }
    }

    /// Reads the `k = 2` all-separation layout as a lattice field in `r`.
    pub fn as_field(&self, lat: &TorusLattice) -> Option<LatticeField> {
        LatticeField::new(lat, self.values.clone()).ok()
    }
}

/// `I_G` for a pure diagram, exactly (up to rounding) on the lattice.
pub fn eval_pure(
    g: &IbpGraph,
    lat: &TorusLattice,
    configs: &BoundaryConfigs,
) -> Result<DiagramValue, DiagramError> {
    eval_pure_terms(&[Term::new(crate::graph::rational(1), 0, g.clone())], lat, configs)
}

/// `sum_t coeff_t I_{G_t}` for pure diagrams (lambda powers are ignored).
pub fn eval_pure_terms(
    terms: &[Term],
    lat: &TorusLattice,
    configs: &BoundaryConfigs,
) -> Result<DiagramValue, DiagramError> {
    for t in terms {
        let np = n_phi(&t.graph);
        if np != 0 {
            return Err(DiagramError::NotPure(np));
        }
    }
    let mut est = GraphEstimator::new(lat, wick_constant(lat), terms, configs, EvalOptions::default())?;
    let values = est.evaluate_deterministic()?;
    Ok(DiagramValue::deterministic(configs.clone(), values))
}

/// Compiled linear combination of diagrams on a set of placements.
pub struct GraphEstimator {
    contractor: Contractor,
    /// `(coefficient, plan per config)`.
    plans: Vec<(f64, Vec<usize>)>,
    n_configs: usize,
}

impl GraphEstimator {
    pub fn new(
        lat: &TorusLattice,
        wick_a: f64,
        terms: &[Term],
        configs: &BoundaryConfigs,
        opts: EvalOptions,
    ) -> Result<Self, DiagramError> {
        let mut contractor = Contractor::new(lat, wick_a, opts);
        let mut plans = Vec::with_capacity(terms.len());
        for t in terms {
            let ids = configs
                .configs
                .iter()
                .map(|c| contractor.compile(&t.graph, c))
                .collect::<Result<Vec<_>, _>>()?;
            plans.push((t.coeff_f64(), ids));
        }
        Ok(Self {
            contractor,
            plans,
            n_configs: configs.len(),
        })
    }

    pub fn n_configs(&self) -> usize {
        self.n_configs
    }

    fn combine(&mut self) -> Result<Vec<f64>, DiagramError> {
        let mut out = vec![0.0; self.n_configs];
        for (coeff, ids) in &self.plans {
            for (o, &id) in out.iter_mut().zip(ids) {
                *o += coeff * self.contractor.value(id)?;
            }
        }
        Ok(out)
    }

    pub fn evaluate_deterministic(&mut self) -> Result<Vec<f64>, DiagramError> {
        self.combine()
    }

    /// Per-config value of the combination on one field sample.
    pub fn evaluate(&mut self, phi: &[f64]) -> Result<Vec<f64>, DiagramError> {
        self.contractor.load_sample(phi);
        self.combine()
    }
}

/// Sample-average estimate of `sum_t coeff_t I_{G_t}` with batch-mean errors.
///
/// Every sample is translation-averaged exactly. `n_batches` contiguous
/// batches; fewer than 8 is refused.
pub fn eval_mixed(
    terms: &[Term],
    samples: &[LatticeField],
    wick_a: f64,
    configs: &BoundaryConfigs,
    n_batches: usize,
) -> Result<DiagramValue, DiagramError> {
    let lat = samples
        .first()
        .map(|s| s.lattice().clone())
        .ok_or(DiagramError::Batches(BatchError::TooFewSamples { samples: 0, batches: n_batches }))?;
    let opts = EvalOptions {
        mode: Mode::Averaged,
        ..EvalOptions::default()
    };
    let mut est = GraphEstimator::new(&lat, wick_a, terms, configs, opts)?;
    let per_sample: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| est.evaluate(s.values()))
        .collect::<Result<_, _>>()?;
    let (values, stderr) = batch_means(&per_sample, n_batches)?;
    Ok(DiagramValue {
        configs: configs.clone(),
        values,
        stderr,
    })
}

#[cfg(test)]
mod tests;
