//! Per-sample observables and their batch statistics.
//!
//! Besides the direct moments, the measurer can record the sample values of
//! the remainder diagrams of the two- and four-point expansions. Their
//! expectations are exactly `(S^2 - C) / lambda^2` and the `lambda^2`
//! coefficient of `S^4`, with far smaller variance than the differences of
//! raw moments.

use rayon::prelude::*;

use super::{ChainState, Integrator, SimConfig, SimError};
use crate::diagram::{eval_pure_terms, BoundaryConfigs, DiagramValue, EvalOptions, GraphEstimator, Mode};
use crate::graph::expand;
use crate::lattice::{convolve_raw, correlate_raw, discrete_laplacian, green_function, wick_constant, LatticeField, TorusLattice};
use crate::stats::{jackknife, BatchAccumulator};

/// Site-averaged scalar observables, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarObservable {
    Phi,
    Phi3,
    Wick2,
    Wick3,
    Wick4,
    /// `Phi ((m - Delta) Phi + (lambda/2) :Phi^3:)`, whose mean is `eps^-2 / 2`.
    Energy,
    /// `Phi I(:Phi^3:)`, whose mean times `lambda` cancels `E[:Phi^2:]`.
    PhiGreenWick3,
}

pub const SCALARS: [(ScalarObservable, &str); 7] = [
    (ScalarObservable::Phi, "phi"),
    (ScalarObservable::Phi3, "phi3"),
    (ScalarObservable::Wick2, "wick2"),
    (ScalarObservable::Wick3, "wick3"),
    (ScalarObservable::Wick4, "wick4"),
    (ScalarObservable::Energy, "energy"),
    (ScalarObservable::PhiGreenWick3, "phi_green_wick3"),
];

/// Which optional observables a chain records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Probes {
    /// Four-point placements for `S^4` (and its remainder, if enabled).
    pub four_point: Option<BoundaryConfigs>,
    pub two_point_remainder: bool,
    pub four_point_remainder: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Layout {
    s2: usize,
    s4: usize,
    r2: usize,
    r4: usize,
    n_s4: usize,
    has_r2: bool,
    has_r4: bool,
    dim: usize,
}

impl Layout {
    fn new(n_sites: usize, probes: &Probes) -> Self {
        let n_s4 = probes.four_point.as_ref().map_or(0, |c| c.len());
        let s2 = SCALARS.len();
        let s4 = s2 + n_sites;
        let r2 = s4 + n_s4;
        let has_r2 = probes.two_point_remainder;
        let r4 = r2 + if has_r2 { n_sites } else { 0 };
        let has_r4 = probes.four_point_remainder && n_s4 > 0;
        let dim = r4 + if has_r4 { n_s4 } else { 0 };
        Self {
            s2,
            s4,
            r2,
            r4,
            n_s4,
            has_r2,
            has_r4,
            dim,
        }
    }
}

/// Turns field samples into observable vectors.
pub struct Measurer {
    lat: TorusLattice,
    lambda: f64,
    wick_a: f64,
    green: Vec<f64>,
    four_point: Vec<Vec<usize>>,
    layout: Layout,
    r2: Option<GraphEstimator>,
    r4: Option<GraphEstimator>,
}

impl Measurer {
    pub fn new(lat: &TorusLattice, lambda: f64, probes: &Probes) -> Result<Self, SimError> {
        let layout = Layout::new(lat.n_sites(), probes);
        let wick_a = wick_constant(lat);
        let opts = EvalOptions {
            mode: Mode::Averaged,
            ..EvalOptions::default()
        };
        let r2 = if layout.has_r2 {
            let exp = expand(2, 1).map_err(|e| SimError::Config(e.to_string()))?;
            let configs = BoundaryConfigs::all_separations(lat);
            Some(GraphEstimator::new(lat, wick_a, &exp.remainder_terms, &configs, opts.clone())?)
        } else {
            None
        };
        let four_point = probes
            .four_point
            .as_ref()
            .map(|c| c.configs.clone())
            .unwrap_or_default();
        let r4 = if layout.has_r4 {
            let exp = expand(4, 1).map_err(|e| SimError::Config(e.to_string()))?;
            let configs = BoundaryConfigs::new(four_point.clone());
            Some(GraphEstimator::new(lat, wick_a, &exp.remainder_terms, &configs, opts)?)
        } else {
            None
        };
        Ok(Self {
            lat: lat.clone(),
            lambda,
            wick_a,
            green: green_function(lat).into_values(),
            four_point,
            layout,
            r2,
            r4,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn measure(&mut self, phi: &LatticeField) -> Result<Vec<f64>, SimError> {
        let lat = &self.lat;
        let n = lat.n_sites();
        let nf = n as f64;
        let a = self.wick_a;
        let v = phi.values();
        let mut out = Vec::with_capacity(self.layout.dim);

        let w3: Vec<f64> = v.iter().map(|x| x * x * x - 3.0 * a * x).collect();
        let lap = discrete_laplacian(phi);
        let green_w3 = convolve_raw(lat, &self.green, &w3);
        let cell = lat.cell();
        let m = lat.mass();
        let mut sums = [0.0; 7];
        for x in 0..n {
            let p = v[x];
            let p2 = p * p;
            sums[0] += p;
            sums[1] += p2 * p;
            sums[2] += p2 - a;
            sums[3] += w3[x];
            sums[4] += p2 * p2 - 6.0 * a * p2 + 3.0 * a * a;
            sums[5] += p * (m * p - lap.at(x) + 0.5 * self.lambda * w3[x]);
            sums[6] += p * cell * green_w3[x];
        }
        out.extend(sums.iter().map(|s| s / nf));

        out.extend(correlate_raw(lat, v, v).into_iter().map(|s| s / nf));

        for cfg in &self.four_point {
            let mut s = 0.0;
            for b in 0..n {
                s += cfg.iter().map(|&o| v[lat.add(b, o)]).product::<f64>();
            }
            out.push(s / nf);
        }
        if let Some(est) = self.r2.as_mut() {
            out.extend(est.evaluate(v)?);
        }
        if let Some(est) = self.r4.as_mut() {
            out.extend(est.evaluate(v)?);
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(crate::diagram::DiagramError::NonFinite.into());
        }
        Ok(out)
    }
}

/// Batch statistics of one or more chains.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub lattice: TorusLattice,
    pub lambda: f64,
    pub wick_a: f64,
    pub four_point: BoundaryConfigs,
    layout: Layout,
    acc: BatchAccumulator,
}

impl MeasurementSet {
    pub fn new(lat: &TorusLattice, lambda: f64, probes: &Probes, n_batches: usize, expected: usize) -> Result<Self, SimError> {
        let layout = Layout::new(lat.n_sites(), probes);
        Ok(Self {
            lattice: lat.clone(),
            lambda,
            wick_a: wick_constant(lat),
            four_point: probes.four_point.clone().unwrap_or(BoundaryConfigs::new(Vec::new())),
            layout,
            acc: BatchAccumulator::new(layout.dim, n_batches, expected)?,
        })
    }

    pub fn push(&mut self, obs: &[f64]) -> Result<(), SimError> {
        Ok(self.acc.push(obs)?)
    }

    /// Batch-by-batch merge; merging in a fixed order keeps runs reproducible.
    pub fn merge(&mut self, other: &Self) -> Result<(), SimError> {
        Ok(self.acc.merge(&other.acc)?)
    }

    pub fn n_samples(&self) -> usize {
        self.acc.seen()
    }

    pub fn n_batches(&self) -> usize {
        self.acc.n_batches()
    }

    pub fn batch_means(&self) -> Result<Vec<Vec<f64>>, SimError> {
        Ok(self.acc.batch_means()?)
    }

    fn slice(&self, start: usize, len: usize) -> Result<(Vec<f64>, Vec<f64>), SimError> {
        let mean = self.acc.mean();
        let se = self.acc.stderr()?;
        Ok((mean[start..start + len].to_vec(), se[start..start + len].to_vec()))
    }

    /// `(mean, stderr)` of a scalar observable.
    pub fn scalar(&self, obs: ScalarObservable) -> Result<(f64, f64), SimError> {
        let i = SCALARS.iter().position(|(o, _)| *o == obs).expect("listed");
        let (m, s) = self.slice(i, 1)?;
        Ok((m[0], s[0]))
    }

    /// `S^2(r)` for every separation `r`.
    pub fn s2(&self) -> Result<DiagramValue, SimError> {
        let (values, stderr) = self.slice(self.layout.s2, self.lattice.n_sites())?;
        Ok(DiagramValue {
            configs: BoundaryConfigs::all_separations(&self.lattice),
            values,
            stderr,
        })
    }

    /// `S^4` on the configured placements.
    pub fn s4(&self) -> Result<Option<DiagramValue>, SimError> {
        if self.layout.n_s4 == 0 {
            return Ok(None);
        }
        let (values, stderr) = self.slice(self.layout.s4, self.layout.n_s4)?;
        Ok(Some(DiagramValue {
            configs: self.four_point.clone(),
            values,
            stderr,
        }))
    }

    /// Estimate of `(S^2 - C)(r) / lambda^2` from the remainder diagrams.
    pub fn two_point_remainder(&self) -> Result<Option<DiagramValue>, SimError> {
        if !self.layout.has_r2 {
            return Ok(None);
        }
        let (values, stderr) = self.slice(self.layout.r2, self.lattice.n_sites())?;
        Ok(Some(DiagramValue {
            configs: BoundaryConfigs::all_separations(&self.lattice),
            values,
            stderr,
        }))
    }

    /// Delete-one-batch jackknife of `f` applied to the remainder estimate of
    /// `(S^2 - C) / lambda^2` over all separations.
    pub fn jackknife_two_point_remainder(
        &self,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<Option<(Vec<f64>, Vec<f64>)>, SimError> {
        if !self.layout.has_r2 {
            return Ok(None);
        }
        let (start, n) = (self.layout.r2, self.lattice.n_sites());
        Ok(Some(jackknife(&self.batch_means()?, |m| f(&m[start..start + n]))?))
    }
}

/// The three pairings of four points.
const PAIRINGS: [[usize; 4]; 3] = [[0, 1, 2, 3], [0, 2, 1, 3], [0, 3, 1, 2]];

/// `U^4 = S^4 - sum over pairings of S^2 S^2`, from the raw moments, with
/// jackknife errors.
pub fn connected_4pt(ms: &MeasurementSet) -> Result<DiagramValue, SimError> {
    if ms.layout.n_s4 == 0 {
        return Err(SimError::Config("no four-point placements were recorded".into()));
    }
    let lat = &ms.lattice;
    let lay = ms.layout;
    let configs = ms.four_point.configs.clone();
    let (values, stderr) = jackknife(&ms.batch_means()?, |m| {
        configs
            .iter()
            .enumerate()
            .map(|(c, o)| {
                let s2 = |i: usize, j: usize| m[lay.s2 + lat.sub(o[i], o[j])];
                let disc: f64 = PAIRINGS.iter().map(|p| s2(p[0], p[1]) * s2(p[2], p[3])).sum();
                m[lay.s4 + c] - disc
            })
            .collect()
    })?;
    Ok(DiagramValue {
        configs: ms.four_point.clone(),
        values,
        stderr,
    })
}

/// `U^4` and `U^4 + 6 lambda star` from the remainder diagrams:
/// `U^4 + 6 lambda star = lambda^2 [R^4 - sum (C R^2 + R^2 C)] - lambda^4 sum R^2 R^2`.
pub fn four_point_remainder(ms: &MeasurementSet) -> Result<(DiagramValue, DiagramValue), SimError> {
    let lay = ms.layout;
    if !(lay.has_r2 && lay.has_r4) {
        return Err(SimError::Config("two- and four-point remainder probes are required".into()));
    }
    let lat = &ms.lattice;
    let lambda = ms.lambda;
    let exp = expand(4, 1).map_err(|e| SimError::Config(e.to_string()))?;
    let first = eval_pure_terms(&exp.f_terms[1], lat, &ms.four_point)?.values;
    let c = green_function(lat);
    let configs = ms.four_point.configs.clone();
    let nc = configs.len();
    let (all, se) = jackknife(&ms.batch_means()?, |m| {
        let mut out = Vec::with_capacity(2 * nc);
        let mut plus = Vec::with_capacity(nc);
        for (i, o) in configs.iter().enumerate() {
            let r2 = |a: usize, b: usize| m[lay.r2 + lat.sub(o[a], o[b])];
            let c2 = |a: usize, b: usize| c.at(lat.sub(o[a], o[b]));
            let mut mixed = 0.0;
            let mut quartic = 0.0;
            for p in PAIRINGS {
                mixed += c2(p[0], p[1]) * r2(p[2], p[3]) + r2(p[0], p[1]) * c2(p[2], p[3]);
                quartic += r2(p[0], p[1]) * r2(p[2], p[3]);
            }
            let v = lambda * lambda * (m[lay.r4 + i] - mixed) - lambda.powi(4) * quartic;
            plus.push(v);
            out.push(lambda * first[i] + v);
        }
        out.extend(plus);
        out
    })?;
    let u4 = DiagramValue {
        configs: ms.four_point.clone(),
        values: all[..nc].to_vec(),
        stderr: se[..nc].to_vec(),
    };
    let corrected = DiagramValue {
        configs: ms.four_point.clone(),
        values: all[nc..].to_vec(),
        stderr: se[nc..].to_vec(),
    };
    Ok((u4, corrected))
}

/// Burn-in, then `n_samples` measurements every `thinning` steps.
pub fn run_chain(cfg: &SimConfig, probes: &Probes) -> Result<MeasurementSet, SimError> {
    let mut state = ChainState::new(&cfg.lattice, cfg.seed);
    run_chain_from(cfg, probes, &mut state)
}

/// As [`run_chain`], continuing from `state`. `cfg.seed` is ignored; the
/// generator inside `state` drives the chain.
pub fn run_chain_from(cfg: &SimConfig, probes: &Probes, state: &mut ChainState) -> Result<MeasurementSet, SimError> {
    if state.phi.lattice() != &cfg.lattice {
        return Err(SimError::Config("state lives on a different lattice".into()));
    }
    let mut integ = Integrator::new(cfg)?;
    let lat = &cfg.lattice;
    let mut measurer = Measurer::new(lat, cfg.lambda, probes)?;
    let mut ms = MeasurementSet::new(lat, cfg.lambda, probes, cfg.n_batches, cfg.n_samples)?;
    for _ in 0..cfg.burn_in {
        integ.step(state)?;
    }
    for _ in 0..cfg.n_samples {
        for _ in 0..cfg.thinning {
            integ.step(state)?;
        }
        ms.push(&measurer.measure(&state.phi)?)?;
    }
    Ok(ms)
}

/// Seed of chain `i` in a multi-chain run.
pub fn chain_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// `n_chains` independent chains with derived seeds, merged in chain order.
pub fn run_chains(cfg: &SimConfig, probes: &Probes, n_chains: usize) -> Result<MeasurementSet, SimError> {
    if n_chains <= 1 {
        return run_chain(cfg, probes);
    }
    let sets: Vec<Result<MeasurementSet, SimError>> = (0..n_chains)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = chain_seed(cfg.seed, i);
            run_chain(&c, probes)
        })
        .collect();
    let mut iter = sets.into_iter();
    let mut total = iter.next().expect("at least one chain")?;
    for s in iter {
        total.merge(&s?)?;
    }
    Ok(total)
}
