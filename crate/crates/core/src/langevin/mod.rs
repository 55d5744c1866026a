//! Langevin sampling of the lattice Gibbs measure.
//!
//! The chain integrates
//! `dPhi = -[(m - Delta) Phi + (lambda/2) Phi^3 - (3/2) lambda a Phi] dt + dW`
//! with per-site noise intensity `eps^-2`. The linear part is solved exactly
//! mode by mode (exponential Euler), so at `lambda = 0` the stationary law is
//! the free field for every `dt`.

mod measure;

pub use measure::{
    chain_seed, connected_4pt, four_point_remainder, run_chain, run_chain_from, run_chains, MeasurementSet, Measurer,
    Probes, ScalarObservable, SCALARS,
};

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::diagram::DiagramError;
use crate::lattice::{
    read_lattice_header, read_u64, wick_constant, write_lattice_header, LatticeError, LatticeField,
    TorusLattice,
};
use crate::stats::BatchError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("field became non-finite at step {step}")]
    Diverged { step: u64 },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Batches(#[from] BatchError),
    #[error("checkpoint: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint is malformed: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub lattice: TorusLattice,
    pub lambda: f64,
    pub dt: f64,
    pub burn_in: usize,
    pub n_samples: usize,
    pub thinning: usize,
    pub seed: u64,
    pub n_batches: usize,
}

impl SimConfig {
    /// Desk-scale defaults: `dt = 0.05`, 2e4 burn-in steps, 2e5 samples
    /// thinned by 5, 16 batches.
    pub fn new(lattice: TorusLattice, lambda: f64) -> Self {
        Self {
            lattice,
            lambda,
            dt: 0.05,
            burn_in: 20_000,
            n_samples: 200_000,
            thinning: 5,
            seed: 0,
            n_batches: 16,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(SimError::Config(format!("lambda = {}", self.lambda)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::Config(format!("dt = {}", self.dt)));
        }
        if self.thinning == 0 {
            return Err(SimError::Config("thinning must be at least 1".into()));
        }
        if self.n_samples < self.n_batches {
            return Err(SimError::Config(format!(
                "{} samples for {} batches",
                self.n_samples, self.n_batches
            )));
        }
        Ok(())
    }

    /// `dt (m + max l_eps)`. The integrator is stable for any value.
    pub fn stiffness(&self) -> f64 {
        self.dt * self.lattice.multiplier().max()
    }
}

/// Per-mode coefficients of the exponential Euler step.
#[derive(Debug, Clone)]
pub struct Integrator {
    lat: TorusLattice,
    lambda: f64,
    wick_a: f64,
    decay: Vec<f64>,
    drift: Vec<f64>,
    /// Noise amplitude for real (self-conjugate) modes; `/sqrt 2` per component otherwise.
    noise: Vec<f64>,
    conj: Vec<usize>,
    buf: Vec<Complex64>,
    out: Vec<Complex64>,
}

impl Integrator {
    pub fn new(cfg: &SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let lat = cfg.lattice.clone();
        let n = lat.n_sites();
        let cell_inv = 1.0 / lat.cell();
        let mu = lat.multiplier();
        let mut decay = Vec::with_capacity(n);
        let mut drift = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        for k in 0..n {
            let m = mu.get(k);
            let e = (-m * cfg.dt).exp();
            decay.push(e);
            drift.push(-(-m * cfg.dt).exp_m1() / m);
            noise.push((n as f64 * stationary_increment_variance(m, cfg.dt, cell_inv)).sqrt());
        }
        Ok(Self {
            conj: (0..n).map(|k| lat.conj_mode(k)).collect(),
            wick_a: wick_constant(&lat),
            lambda: cfg.lambda,
            lat,
            decay,
            drift,
            noise,
            buf: vec![Complex64::default(); n],
            out: vec![Complex64::default(); n],
        })
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lat
    }

    /// One step driven by `n_sites` standard normals `g`. Odd in `(phi, g)`.
    pub fn step_with_noise(&mut self, phi: &mut [f64], g: &[f64]) {
        let n = phi.len();
        let la = self.lambda;
        let lin = 1.5 * la * self.wick_a;
        for (b, &p) in self.buf.iter_mut().zip(phi.iter()) {
            *b = Complex64::new(p, lin * p - 0.5 * la * p * p * p);
        }
        self.lat.fft2(&mut self.buf, false);
        let half = std::f64::consts::FRAC_1_SQRT_2;
        for k in 0..n {
            let c = self.conj[k];
            let zf = self.buf[k];
            let zc = self.buf[c].conj();
            let phi_hat = (zf + zc) * 0.5;
            let nl_hat = (zf - zc) * Complex64::new(0.0, -0.5);
            let eta = if c == k {
                Complex64::new(self.noise[k] * g[k], 0.0)
            } else if k < c {
                Complex64::new(g[k], g[c]) * (self.noise[k] * half)
            } else {
                Complex64::new(g[c], -g[k]) * (self.noise[k] * half)
            };
            self.out[k] = phi_hat * self.decay[k] + nl_hat * self.drift[k] + eta;
        }
        self.lat.fft2(&mut self.out, true);
        let norm = 1.0 / n as f64;
        for (p, o) in phi.iter_mut().zip(&self.out) {
            *p = o.re * norm;
        }
    }

    pub fn step(&mut self, state: &mut ChainState) -> Result<(), SimError> {
        let n = state.phi.values().len();
        let mut g = std::mem::take(&mut state.noise);
        g.clear();
        g.extend((0..n).map(|_| state.rng.sample::<f64, _>(StandardNormal)));
        self.step_with_noise(state.phi.values_mut(), &g);
        state.noise = g;
        state.step_count += 1;
        if state.phi.values().iter().any(|v| !v.is_finite()) {
            return Err(SimError::Diverged {
                step: state.step_count,
            });
        }
        Ok(())
    }
}

/// Variance of the exact OU increment of one mode, in units where the
/// stationary variance is `eps^-2 / (2 mu)`.
pub fn stationary_increment_variance(mu: f64, dt: f64, cell_inv: f64) -> f64 {
    cell_inv * -(-2.0 * mu * dt).exp_m1() / (2.0 * mu)
}

/// Field, step counter and generator of one chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub phi: LatticeField,
    pub step_count: u64,
    rng: ChaCha8Rng,
    noise: Vec<f64>,
}

impl ChainState {
    /// Starts from an exact free-field draw.
    pub fn new(lat: &TorusLattice, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = sample_free_field(lat, &mut rng);
        Self {
            phi,
            step_count: 0,
            rng,
            noise: Vec::new(),
        }
    }

    pub fn from_field(phi: LatticeField, seed: u64) -> Self {
        Self {
            phi,
            step_count: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise: Vec::new(),
        }
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Layout: lattice header, field values, generator seed, stream and word
    /// position, step count. Little endian throughout.
    pub fn write_checkpoint(&self, path: &Path) -> Result<(), SimError> {
        let mut w = BufWriter::new(File::create(path)?);
        write_lattice_header(&mut w, self.phi.lattice())?;
        for v in self.phi.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.rng.get_seed())?;
        w.write_all(&self.rng.get_stream().to_le_bytes())?;
        w.write_all(&self.rng.get_word_pos().to_le_bytes())?;
        w.write_all(&self.step_count.to_le_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self, SimError> {
        let mut r = BufReader::new(File::open(path)?);
        let lat = read_lattice_header(&mut r)?;
        let mut values = Vec::with_capacity(lat.n_sites());
        let mut b8 = [0u8; 8];
        for _ in 0..lat.n_sites() {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        let mut seed = [0u8; 32];
        r.read_exact(&mut seed)?;
        let stream = read_u64(&mut r)?;
        let mut b16 = [0u8; 16];
        r.read_exact(&mut b16)?;
        let word_pos = u128::from_le_bytes(b16);
        let step_count = read_u64(&mut r)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(SimError::Checkpoint(format!("{} trailing bytes", rest.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Checkpoint("non-finite field value".into()));
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        Ok(Self {
            phi: LatticeField::new(&lat, values)?,
            step_count,
            rng,
            noise: Vec::new(),
        })
    }
}

/// Exact draw from the free field with covariance `C`.
pub fn sample_free_field(lat: &TorusLattice, rng: &mut impl Rng) -> LatticeField {
    let n = lat.n_sites();
    let mu = lat.multiplier();
    let cell_inv = 1.0 / lat.cell();
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut spec = vec![Complex64::default(); n];
    for (k, s) in spec.iter_mut().enumerate() {
        let c = lat.conj_mode(k);
        let amp = (n as f64 * cell_inv / (2.0 * mu.get(k))).sqrt();
        *s = if c == k {
            Complex64::new(amp * g[k], 0.0)
        } else if k < c {
            Complex64::new(g[k], g[c]) * (amp * half)
        } else {
            Complex64::new(g[c], -g[k]) * (amp * half)
        };
    }
    LatticeField::new(lat, lat.idft_real(spec)).expect("sizes agree")
}
