//! Littlewood-Paley blocks and weighted Besov norms on the lattice torus.
//!
//! Frequencies are `xi = (p, q) / M` in the zone `[-1/(2 eps), 1/(2 eps))^2`.
//! Blocks use the radial cutoff `chi` (1 on `[0, 2/3]`, 0 beyond `4/3`,
//! quintic smoothstep between): `phi_{-1} = chi(|xi|)`,
//! `phi_j = chi(|xi| / 2^{j+1}) - chi(|xi| / 2^j)`. The last block `j_eps`
//! is the first whose support meets the zone boundary and takes everything
//! not covered below it.

use num_complex::Complex64;
use thiserror::Error;

use crate::lattice::{LatticeError, LatticeField, TorusLattice};

#[derive(Debug, Error)]
pub enum BesovError {
    #[error("grid has {points} points per axis; at least 4 are required")]
    TooCoarse { points: usize },
    #[error("product grid with {0} entries is too large")]
    TooLarge(usize),
    #[error("multi-point norms are implemented for k = 2 and k = 4, not {0}")]
    Arity(usize),
    #[error("expected {expected} values, got {got}")]
    Size { expected: usize, got: usize },
    #[error("field is on a different lattice than the partition")]
    LatticeMismatch,
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Radial cutoff: 1 on `[0, 2/3]`, 0 on `[4/3, inf)`.
pub fn chi(t: f64) -> f64 {
    let s = ((t - 2.0 / 3.0) * 1.5).clamp(0.0, 1.0);
    1.0 - s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

/// `j_eps`: first block whose support meets the boundary of the frequency zone.
pub fn cutoff_index(eps: f64) -> i32 {
    let inner = 0.5 / eps;
    let outer = std::f64::consts::SQRT_2 * inner;
    let mut j = -1;
    loop {
        let (lo, hi) = if j < 0 {
            (0.0, 4.0 / 3.0)
        } else {
            let s = 2f64.powi(j);
            (2.0 / 3.0 * s, 8.0 / 3.0 * s)
        };
        if hi >= inner && lo <= outer {
            return j;
        }
        j += 1;
    }
}

fn raw_block(j: i32, r: f64) -> f64 {
    if j < 0 {
        chi(r)
    } else {
        let s = 2f64.powi(j);
        chi(r / (2.0 * s)) - chi(r / s)
    }
}

/// Frequency masks of the blocks `j = -1 ..= j_eps` for one lattice.
#[derive(Debug, Clone)]
pub struct DyadicPartition {
    lat: TorusLattice,
    j_max: i32,
    masks: Vec<Vec<f64>>,
}

impl DyadicPartition {
    pub fn new(lat: &TorusLattice) -> Self {
        let j_max = cutoff_index(lat.eps());
        let radius: Vec<f64> = (0..lat.n_sites())
            .map(|k| {
                let (a, b) = lat.frequency(k);
                a.hypot(b)
            })
            .collect();
        let mut masks: Vec<Vec<f64>> = (-1..j_max)
            .map(|j| radius.iter().map(|&r| raw_block(j, r)).collect())
            .collect();
        let last: Vec<f64> = (0..lat.n_sites())
            .map(|k| 1.0 - masks.iter().map(|m| m[k]).sum::<f64>())
            .collect();
        masks.push(last);
        Self {
            lat: lat.clone(),
            j_max,
            masks,
        }
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lat
    }

    /// `j_eps`.
    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    /// Block indices `-1 ..= j_eps`.
    pub fn indices(&self) -> impl Iterator<Item = i32> + '_ {
        -1..=self.j_max
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// `phi_j^eps` on the DFT modes.
    pub fn mask(&self, j: i32) -> &[f64] {
        &self.masks[(j + 1) as usize]
    }
}

/// `rho(x)^ell` with `rho(x) = (1 + |h x|^2)^{-delta/2}`, `x` the centered
/// position on the torus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    pub h: f64,
    pub delta: f64,
    pub ell: f64,
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self::unit()
    }
}

impl WeightSpec {
    pub fn unit() -> Self {
        Self {
            h: 0.0,
            delta: 0.0,
            ell: 1.0,
        }
    }

    pub fn rho(&self, x: (f64, f64)) -> f64 {
        let r2 = self.h * self.h * (x.0 * x.0 + x.1 * x.1);
        (1.0 + r2).powf(-0.5 * self.delta * self.ell)
    }

    pub fn field(&self, lat: &TorusLattice) -> LatticeField {
        LatticeField::from_fn(lat, |s| self.rho(lat.position(s)))
    }
}

/// Integrability exponents supported by the norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exponent {
    One,
    Two,
    Inf,
}

/// `L^{p,eps}` norm `(eps^2 sum |g|^p)^{1/p}` of `g rho`.
pub fn lp_norm(f: &LatticeField, p: Exponent, w: &WeightSpec) -> f64 {
    let lat = f.lattice();
    let vals = f.values().iter().enumerate().map(|(s, v)| (v * w.rho(lat.position(s))).abs());
    match p {
        Exponent::One => lat.cell() * vals.sum::<f64>(),
        Exponent::Two => (lat.cell() * vals.map(|v| v * v).sum::<f64>()).sqrt(),
        Exponent::Inf => vals.fold(0.0, f64::max),
    }
}

/// `Delta_j^eps f` for every block, in order `j = -1 ..= j_eps`.
pub fn lp_blocks(f: &LatticeField, part: &DyadicPartition) -> Result<Vec<LatticeField>, BesovError> {
    if f.lattice() != part.lattice() {
        return Err(BesovError::LatticeMismatch);
    }
    let lat = part.lattice();
    let spec = lat.dft(f.values());
    part.masks
        .iter()
        .map(|m| {
            let b: Vec<Complex64> = spec.iter().zip(m).map(|(c, w)| c * w).collect();
            Ok(LatticeField::new(lat, lat.idft_real(b))?)
        })
        .collect()
}

fn combine(terms: impl Iterator<Item = f64>, q: Exponent) -> f64 {
    match q {
        Exponent::One => terms.sum(),
        Exponent::Two => terms.map(|t| t * t).sum::<f64>().sqrt(),
        Exponent::Inf => terms.fold(0.0, f64::max),
    }
}

/// `(sum_j 2^{alpha j q} ||Delta_j f||_{L^p(rho)}^q)^{1/q}`.
pub fn besov_norm_with(
    f: &LatticeField,
    part: &DyadicPartition,
    alpha: f64,
    p: Exponent,
    q: Exponent,
    w: &WeightSpec,
) -> Result<f64, BesovError> {
    let blocks = lp_blocks(f, part)?;
    Ok(combine(
        part.indices()
            .zip(&blocks)
            .map(|(j, b)| 2f64.powf(alpha * j as f64) * lp_norm(b, p, w)),
        q,
    ))
}

pub fn besov_norm(f: &LatticeField, alpha: f64, p: Exponent, q: Exponent, w: &WeightSpec) -> Result<f64, BesovError> {
    besov_norm_with(f, &DyadicPartition::new(f.lattice()), alpha, p, q, w)
}

/// The Holder-Besov norm `C^alpha = B^alpha_{inf,inf}`.
pub fn holder_norm(f: &LatticeField, alpha: f64, w: &WeightSpec) -> Result<f64, BesovError> {
    besov_norm(f, alpha, Exponent::Inf, Exponent::Inf, w)
}

/// A function of `k` lattice points sampled on the sub-grid of every
/// `stride`-th site per axis. Component 0 varies slowest.
#[derive(Debug, Clone)]
pub struct MultiPointField {
    pub lattice: TorusLattice,
    pub k: usize,
    pub stride: usize,
    pub values: Vec<f64>,
}

impl MultiPointField {
    pub fn new(lattice: &TorusLattice, k: usize, stride: usize, values: Vec<f64>) -> Result<Self, BesovError> {
        let nc = lattice.n() / stride.max(1);
        let expected = (nc * nc).pow(k as u32);
        if values.len() != expected {
            return Err(BesovError::Size {
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            lattice: lattice.clone(),
            k,
            stride: stride.max(1),
            values,
        })
    }

    /// Samples `f(x_1, ..., x_k)` (site indices of the full lattice) on the sub-grid.
    pub fn from_fn(lattice: &TorusLattice, k: usize, stride: usize, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self, BesovError> {
        let stride = stride.max(1);
        let nc = lattice.n() / stride;
        let per = nc * nc;
        let total = per.checked_pow(k as u32).ok_or(BesovError::TooLarge(usize::MAX))?;
        if total > MAX_PRODUCT {
            return Err(BesovError::TooLarge(total));
        }
        let mut pts = vec![0usize; k];
        let values = (0..total)
            .map(|idx| {
                let mut r = idx;
                for i in (0..k).rev() {
                    let c = r % per;
                    r /= per;
                    pts[i] = lattice.site((c / nc) * stride, (c % nc) * stride);
                }
                f(&pts)
            })
            .collect();
        Self::new(lattice, k, stride, values)
    }

    fn coarse_lattice(&self) -> Result<TorusLattice, BesovError> {
        Ok(TorusLattice::new(
            self.lattice.side(),
            self.lattice.eps() * self.stride as f64,
            self.lattice.mass(),
        )?)
    }
}

const MAX_PRODUCT: usize = 1 << 22;

/// Componentwise Holder-Besov norm.
///
/// `k = 2`: the translation average `g(r) = mean_x f(x, x + r)` is a function
/// of one variable and its `C^alpha` norm is returned. `k = 4`: the sup over
/// block indices of `2^{alpha sum j_i} ||prod_i Delta_{j_i, x_i} f||_inf` on
/// the stored sub-grid, which only sees frequencies resolved by that grid and
/// so bounds the full norm from below.
pub fn holder_multi(f: &MultiPointField, alpha: f64, w: &WeightSpec) -> Result<f64, BesovError> {
    let nc = f.lattice.n() / f.stride;
    if nc < 4 {
        return Err(BesovError::TooCoarse { points: nc });
    }
    let coarse = f.coarse_lattice()?;
    let per = nc * nc;
    match f.k {
        2 => {
            let g = LatticeField::from_fn(&coarse, |r| {
                (0..per)
                    .map(|x| f.values[x * per + coarse.add(x, r)])
                    .sum::<f64>()
                    / per as f64
            });
            holder_norm(&g, alpha, w)
        }
        4 => {
            let part = DyadicPartition::new(&coarse);
            let weights: Vec<f64> = (0..per).map(|s| w.rho(coarse.position(s))).collect();
            let mut best: f64 = 0.0;
            let mut stack: Vec<(usize, i32, Vec<f64>)> = vec![(0, 0, f.values.clone())];
            while let Some((comp, jsum, t)) = stack.pop() {
                if comp == 4 {
                    let mut sup: f64 = 0.0;
                    for (idx, v) in t.iter().enumerate() {
                        let mut r = idx;
                        let mut wt = 1.0;
                        for _ in 0..4 {
                            wt *= weights[r % per];
                            r /= per;
                        }
                        sup = sup.max((v * wt).abs());
                    }
                    best = best.max(2f64.powf(alpha * jsum as f64) * sup);
                    continue;
                }
                for j in part.indices() {
                    let b = apply_component(&coarse, &t, 4, comp, part.mask(j));
                    stack.push((comp + 1, jsum + j, b));
                }
            }
            Ok(best)
        }
        k => Err(BesovError::Arity(k)),
    }
}

/// Applies a Fourier mask along component `comp` of a `k`-point tensor.
fn apply_component(lat: &TorusLattice, t: &[f64], k: usize, comp: usize, mask: &[f64]) -> Vec<f64> {
    let per = lat.n_sites();
    let inner = per.pow((k - 1 - comp) as u32);
    let outer = per.pow(comp as u32);
    let mut out = vec![0.0; t.len()];
    let mut buf = vec![Complex64::default(); per];
    for o in 0..outer {
        for i in 0..inner {
            let at = |s: usize| (o * per + s) * inner + i;
            for (s, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(t[at(s)], 0.0);
            }
            lat.fft2(&mut buf, false);
            for (b, m) in buf.iter_mut().zip(mask) {
                *b *= m;
            }
            lat.fft2(&mut buf, true);
            for (s, b) in buf.iter().enumerate() {
                out[at(s)] = b.re / per as f64;
            }
        }
    }
    out
}
