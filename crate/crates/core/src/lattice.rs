//! Periodic two-dimensional lattice, discrete Laplacian and the spectral
//! machinery built on top of it (Green function, convolutions).
//!
//! Fourier conventions: the physical transform carries the site weight,
//! `F f(xi) = eps^2 sum_x f(x) e^{-2 pi i xi.x}`, and its inverse carries
//! `M^-2`. Internally everything is done with the unnormalized DFT on the
//! `n x n` index grid, which differs from the physical one by the factor
//! `eps^2` in the forward direction.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("side length and spacing must be positive (got M={side}, eps={eps})")]
    NonPositiveGeometry { side: f64, eps: f64 },
    #[error("M/eps = {ratio} is not an integer")]
    NonIntegerSites { ratio: f64 },
    #[error("grid size {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("mass must be positive (got {0})")]
    NonPositiveMass(f64),
    #[error("field has {got} values, lattice has {expected} sites")]
    SizeMismatch { expected: usize, got: usize },
    #[error("fields live on different lattices")]
    LatticeMismatch,
    #[error("kernel file: {0}")]
    Io(#[from] std::io::Error),
    #[error("kernel file is malformed: {0}")]
    Format(String),
}

struct FftPlans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// The periodic lattice `eps Z^2 ∩ T^2_M` together with the mass of the free
/// field living on it.
#[derive(Clone)]
pub struct TorusLattice {
    side: f64,
    eps: f64,
    mass: f64,
    n: usize,
    plans: Arc<FftPlans>,
}

impl fmt::Debug for TorusLattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusLattice")
            .field("side", &self.side)
            .field("eps", &self.eps)
            .field("mass", &self.mass)
            .field("n", &self.n)
            .finish()
    }
}

impl PartialEq for TorusLattice {
    fn eq(&self, other: &Self) -> bool {
        self.side == other.side && self.eps == other.eps && self.mass == other.mass
    }
}

impl TorusLattice {
    pub fn new(side: f64, eps: f64, mass: f64) -> Result<Self, LatticeError> {
        if !(side > 0.0 && eps > 0.0) || !side.is_finite() || !eps.is_finite() {
            return Err(LatticeError::NonPositiveGeometry { side, eps });
        }
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(LatticeError::NonPositiveMass(mass));
        }
        let ratio = side / eps;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(LatticeError::NonIntegerSites { ratio });
        }
        let n = n as usize;
        if !n.is_power_of_two() {
            return Err(LatticeError::NotPowerOfTwo(n));
        }
        let mut planner = FftPlanner::new();
        let plans = FftPlans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        };
        Ok(Self {
            side,
            eps,
            mass,
            n,
            plans: Arc::new(plans),
        })
    }

    /// Same geometry, different mass.
    pub fn with_mass(&self, mass: f64) -> Result<Self, LatticeError> {
        Self::new(self.side, self.eps, mass)
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Number of sites per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_sites(&self) -> usize {
        self.n * self.n
    }

    /// `eps^2`, the measure of one lattice cell.
    pub fn cell(&self) -> f64 {
        self.eps * self.eps
    }

    pub fn site(&self, i: usize, j: usize) -> usize {
        (i % self.n) * self.n + (j % self.n)
    }

    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site / self.n, site % self.n)
    }

    /// Site index of `a + b` (periodic).
    pub fn add(&self, a: usize, b: usize) -> usize {
        let (ai, aj) = self.coords(a);
        let (bi, bj) = self.coords(b);
        self.site(ai + bi, aj + bj)
    }

    /// Site index of `a - b` (periodic).
    pub fn sub(&self, a: usize, b: usize) -> usize {
        let (ai, aj) = self.coords(a);
        let (bi, bj) = self.coords(b);
        self.site(ai + self.n - bi, aj + self.n - bj)
    }

    pub fn neg(&self, a: usize) -> usize {
        self.sub(0, a)
    }

    /// Signed integer offsets of a site in `[-n/2, n/2)`.
    pub fn centered(&self, site: usize) -> (i64, i64) {
        let (i, j) = self.coords(site);
        let n = self.n as i64;
        let wrap = |v: usize| {
            let v = v as i64;
            if v >= (n + 1) / 2 {
                v - n
            } else {
                v
            }
        };
        (wrap(i), wrap(j))
    }

    /// Physical position of a site in `[-M/2, M/2)^2`.
    pub fn position(&self, site: usize) -> (f64, f64) {
        let (i, j) = self.centered(site);
        (i as f64 * self.eps, j as f64 * self.eps)
    }

    /// Physical frequency `xi` of a DFT index, in `[-1/(2 eps), 1/(2 eps))^2`.
    pub fn frequency(&self, mode: usize) -> (f64, f64) {
        let (p, q) = self.centered(mode);
        (p as f64 / self.side, q as f64 / self.side)
    }

    /// `l_eps(xi) = 4 [sin^2(eps pi xi_1) + sin^2(eps pi xi_2)] / eps^2`.
    pub fn laplacian_symbol(&self, mode: usize) -> f64 {
        // centered indices make the symbol exactly even
        let (p, q) = self.centered(mode);
        let s1 = (std::f64::consts::PI * p as f64 / self.n as f64).sin();
        let s2 = (std::f64::consts::PI * q as f64 / self.n as f64).sin();
        4.0 * (s1 * s1 + s2 * s2) / (self.eps * self.eps)
    }

    pub fn multiplier(&self) -> SpectralMultiplier {
        let values = (0..self.n_sites())
            .map(|k| self.mass + self.laplacian_symbol(k))
            .collect();
        SpectralMultiplier { values }
    }

    /// In-place unnormalized 2-d DFT of an `n x n` row-major buffer.
    pub fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        assert_eq!(data.len(), n * n);
        if n == 1 {
            return;
        }
        let plan = if inverse {
            &self.plans.inverse
        } else {
            &self.plans.forward
        };
        plan.process(data);
        transpose_square(data, n);
        plan.process(data);
        transpose_square(data, n);
    }

    /// Forward DFT of a real array.
    pub fn dft(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut buf, false);
        buf
    }

    /// Inverse DFT (with the `1/n_sites` normalization) keeping the real part.
    pub fn idft_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.fft2(&mut spectrum, true);
        let norm = 1.0 / self.n_sites() as f64;
        spectrum.into_iter().map(|c| c.re * norm).collect()
    }

    /// Applies a real, even Fourier multiplier (indexed by DFT mode).
    pub fn apply_symbol(&self, values: &[f64], symbol: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut spec = self.dft(values);
        for (k, c) in spec.iter_mut().enumerate() {
            *c *= symbol(k);
        }
        self.idft_real(spec)
    }

    /// DFT index of the mode `-k`.
    pub fn conj_mode(&self, k: usize) -> usize {
        self.neg(k)
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Per-mode values of `m + l_eps(xi)`.
#[derive(Debug, Clone)]
pub struct SpectralMultiplier {
    values: Vec<f64>,
}

impl SpectralMultiplier {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, mode: usize) -> f64 {
        self.values[mode]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::MIN, f64::max)
    }
}

/// A real function on the lattice sites, row-major over the `n x n` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    lattice: TorusLattice,
    values: Vec<f64>,
}

impl LatticeField {
    pub fn new(lattice: &TorusLattice, values: Vec<f64>) -> Result<Self, LatticeError> {
        if values.len() != lattice.n_sites() {
            return Err(LatticeError::SizeMismatch {
                expected: lattice.n_sites(),
                got: values.len(),
            });
        }
        Ok(Self {
            lattice: lattice.clone(),
            values,
        })
    }

    pub fn zeros(lattice: &TorusLattice) -> Self {
        Self::constant(lattice, 0.0)
    }

    pub fn constant(lattice: &TorusLattice, c: f64) -> Self {
        Self {
            lattice: lattice.clone(),
            values: vec![c; lattice.n_sites()],
        }
    }

    pub fn from_fn(lattice: &TorusLattice, f: impl FnMut(usize) -> f64) -> Self {
        Self {
            lattice: lattice.clone(),
            values: (0..lattice.n_sites()).map(f).collect(),
        }
    }

    /// The lattice delta `eps^-2 1_{x = site}`, the unit of `*_eps`.
    pub fn delta(lattice: &TorusLattice, site: usize) -> Self {
        let mut f = Self::zeros(lattice);
        f.values[site] = 1.0 / lattice.cell();
        f
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, site: usize) -> f64 {
        self.values[site]
    }

    /// `<f, g>_eps = eps^2 sum_x f(x) g(x)`.
    pub fn pairing(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.lattice, other.lattice);
        self.lattice.cell() * dot(&self.values, &other.values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            lattice: self.lattice.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.lattice, other.lattice);
        Self {
            lattice: self.lattice.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `x -> f(x + shift)`.
    pub fn translated(&self, shift: usize) -> Self {
        let lat = &self.lattice;
        Self::from_fn(lat, |x| self.values[lat.add(x, shift)])
    }

    /// `x -> f(-x)`.
    pub fn reflected(&self) -> Self {
        let lat = &self.lattice;
        Self::from_fn(lat, |x| self.values[lat.neg(x)])
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Delta_eps f(x) = eps^-2 sum_i [f(x + eps e_i) + f(x - eps e_i) - 2 f(x)]`.
pub fn discrete_laplacian(f: &LatticeField) -> LatticeField {
    let lat = f.lattice();
    let n = lat.n();
    let inv = 1.0 / lat.cell();
    let v = f.values();
    LatticeField::from_fn(lat, |s| {
        let (i, j) = lat.coords(s);
        let up = v[lat.site(i + 1, j)];
        let down = v[lat.site(i + n - 1, j)];
        let right = v[lat.site(i, j + 1)];
        let left = v[lat.site(i, j + n - 1)];
        inv * (up + down + right + left - 4.0 * v[s])
    })
}

/// `2 (m - Delta_eps) f`.
pub fn massive_operator(f: &LatticeField) -> LatticeField {
    let m = f.lattice().mass();
    let lap = discrete_laplacian(f);
    f.zip_with(&lap, |a, l| 2.0 * (m * a - l))
}

/// The periodic Green function `C_{M,eps}` of `2 (m - Delta_eps)`:
/// `2 (m - Delta_eps) C = eps^-2 1_{x=0}`.
pub fn green_function(lat: &TorusLattice) -> LatticeField {
    let mu = lat.multiplier();
    let inv_cell = 1.0 / lat.cell();
    let spectrum: Vec<Complex64> = mu
        .values()
        .iter()
        .map(|&m| Complex64::new(inv_cell / (2.0 * m), 0.0))
        .collect();
    let values = lat.idft_real(spectrum);
    // C is even; enforce exact symmetry against rounding noise
    let sym: Vec<f64> = (0..lat.n_sites())
        .map(|x| 0.5 * (values[x] + values[lat.neg(x)]))
        .collect();
    LatticeField::new(lat, sym).expect("size matches by construction")
}

/// `a_{M,eps} = C_{M,eps}(0)`.
pub fn wick_constant(lat: &TorusLattice) -> f64 {
    let mu = lat.multiplier();
    mu.values().iter().map(|&m| 1.0 / (2.0 * m)).sum::<f64>() / (lat.side() * lat.side())
}

/// `I_eps f = C_{M,eps} *_eps f`, computed as multiplication by `1/(2 mu)`.
pub fn apply_green(f: &LatticeField) -> LatticeField {
    let lat = f.lattice();
    let mu = lat.multiplier();
    let values = lat.apply_symbol(f.values(), |k| 0.5 / mu.get(k));
    LatticeField::new(lat, values).expect("size matches by construction")
}

/// `(f *_eps g)(x) = eps^2 sum_y f(x - y) g(y)`.
pub fn convolve(f: &LatticeField, g: &LatticeField) -> Result<LatticeField, LatticeError> {
    if f.lattice() != g.lattice() {
        return Err(LatticeError::LatticeMismatch);
    }
    let lat = f.lattice();
    LatticeField::new(lat, convolve_raw(lat, f.values(), g.values()))
}

pub(crate) fn convolve_raw(lat: &TorusLattice, f: &[f64], g: &[f64]) -> Vec<f64> {
    let mut fh = lat.dft(f);
    let gh = lat.dft(g);
    let cell = lat.cell();
    for (a, b) in fh.iter_mut().zip(&gh) {
        *a *= *b * cell;
    }
    lat.idft_real(fh)
}

/// `y -> sum_v h(v) k(v - y)` (unweighted circular correlation).
pub(crate) fn correlate_raw(lat: &TorusLattice, h: &[f64], k: &[f64]) -> Vec<f64> {
    let mut hh = lat.dft(h);
    let kh = lat.dft(k);
    for (a, b) in hh.iter_mut().zip(&kh) {
        *a *= b.conj();
    }
    lat.idft_real(hh)
}

/// On-disk cache of Green kernels keyed by `(M, eps, m)`.
///
/// Layout: three little-endian `f64` (M, eps, m), one little-endian `u64`
/// (n), then `n^2` little-endian `f64` values row-major.
pub struct KernelCache {
    dir: PathBuf,
}

impl KernelCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, lat: &TorusLattice) -> PathBuf {
        self.dir.join(format!(
            "green_M{}_eps{}_m{}.bin",
            lat.side(),
            lat.eps(),
            lat.mass()
        ))
    }

    /// Loads the kernel from disk, computing and storing it on a miss.
    pub fn green(&self, lat: &TorusLattice) -> Result<LatticeField, LatticeError> {
        let path = self.path_for(lat);
        if path.exists() {
            let (cached_lat, field) = read_kernel(&path)?;
            if &cached_lat == lat {
                return Ok(field);
            }
        }
        let field = green_function(lat);
        std::fs::create_dir_all(&self.dir)?;
        write_kernel(&path, &field)?;
        Ok(field)
    }
}

pub(crate) fn write_lattice_header(w: &mut impl Write, lat: &TorusLattice) -> std::io::Result<()> {
    w.write_all(&lat.side().to_le_bytes())?;
    w.write_all(&lat.eps().to_le_bytes())?;
    w.write_all(&lat.mass().to_le_bytes())?;
    w.write_all(&(lat.n() as u64).to_le_bytes())
}

pub(crate) fn read_lattice_header(r: &mut impl Read) -> Result<TorusLattice, LatticeError> {
    let side = read_f64(r)?;
    let eps = read_f64(r)?;
    let mass = read_f64(r)?;
    let n = read_u64(r)? as usize;
    let lat = TorusLattice::new(side, eps, mass)?;
    if lat.n() != n {
        return Err(LatticeError::Format(format!(
            "header says n={n} but M/eps gives {}",
            lat.n()
        )));
    }
    Ok(lat)
}

pub(crate) fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn write_kernel(path: &Path, field: &LatticeField) -> Result<(), LatticeError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_lattice_header(&mut w, field.lattice())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_kernel(path: &Path) -> Result<(TorusLattice, LatticeField), LatticeError> {
    let mut r = BufReader::new(File::open(path)?);
    let lat = read_lattice_header(&mut r)?;
    let mut values = Vec::with_capacity(lat.n_sites());
    for _ in 0..lat.n_sites() {
        values.push(read_f64(&mut r)?);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(LatticeError::Format(format!("{} trailing bytes", rest.len())));
    }
    let field = LatticeField::new(&lat, values)?;
    Ok((lat, field))
}
