//! Experiment configuration from flat `key = value` files.

use std::fmt;
use std::path::{Path, PathBuf};

use phi4_core::diagram::BoundaryConfigs;
use phi4_core::langevin::{Probes, SimConfig};
use phi4_core::TorusLattice;
use serde::Deserialize;

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Toy,
    Expand,
    Oracle,
    Asymptoticity,
    TwoPoint,
    FourPoint,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::Toy,
        Kind::Expand,
        Kind::Oracle,
        Kind::Asymptoticity,
        Kind::TwoPoint,
        Kind::FourPoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Toy => "toy",
            Kind::Expand => "expand",
            Kind::Oracle => "oracle",
            Kind::Asymptoticity => "asymptoticity",
            Kind::TwoPoint => "two_point",
            Kind::FourPoint => "four_point",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Chain parameters shared by the Monte Carlo experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub dt: f64,
    pub burn_in: usize,
    pub n_samples: usize,
    pub thinning: usize,
    pub seed: u64,
    pub n_batches: usize,
    /// Independent chains per grid point, each with `n_samples` samples.
    pub n_chains: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt: 0.05,
            burn_in: 20_000,
            n_samples: 200_000,
            thinning: 5,
            seed: 0,
            n_batches: 16,
            n_chains: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: Kind,
    /// Torus side `M`.
    pub size: f64,
    pub eps: f64,
    pub mass: f64,
    pub lambda_grid: Vec<f64>,
    /// Expansion order `N`.
    pub order: usize,
    /// Number of boundary points `k` for `expand`.
    pub points: usize,
    pub n_terms: usize,
    /// Regularity loss in the `C^{2 - gamma}` norm of the two-point report.
    pub gamma: f64,
    pub four_point_stride: usize,
    pub four_point_max: usize,
    pub sim: SimSettings,
    pub output_dir: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    kind: Option<Kind>,
    size: Option<f64>,
    eps: Option<f64>,
    mass: Option<f64>,
    lambda_grid: Option<Vec<f64>>,
    order: Option<usize>,
    points: Option<usize>,
    n_terms: Option<usize>,
    gamma: Option<f64>,
    four_point_stride: Option<usize>,
    four_point_max: Option<usize>,
    dt: Option<f64>,
    burn_in: Option<usize>,
    n_samples: Option<usize>,
    thinning: Option<usize>,
    seed: Option<u64>,
    n_batches: Option<usize>,
    n_chains: Option<usize>,
    output_dir: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:expr, $raw:expr, $($field:ident),*) => {
        $(if let Some(v) = $raw.$field { $dst.$field = v; })*
    };
}

impl ExperimentSpec {
    pub fn defaults(kind: Kind) -> Self {
        let (size, grid, order) = match kind {
            Kind::Toy => (2.0, vec![0.01], 0),
            Kind::Expand => (2.0, vec![0.1], 2),
            Kind::Oracle => (2.0, vec![0.05, 0.1, 0.2], 2),
            Kind::Asymptoticity => (2.0, vec![0.02, 0.05, 0.1, 0.2], 0),
            Kind::TwoPoint => (16.0, vec![0.05, 0.1, 0.2], 2),
            Kind::FourPoint => (8.0, vec![0.05, 0.1, 0.2], 1),
        };
        Self {
            kind,
            size,
            eps: 1.0,
            mass: 1.0,
            lambda_grid: grid,
            order,
            points: 2,
            n_terms: 120,
            gamma: 0.5,
            four_point_stride: 4,
            four_point_max: 8,
            sim: SimSettings::default(),
            output_dir: PathBuf::from("results").join(kind.name()),
        }
    }

    /// Parses a flat `key = value` document. A `kind` key, if present, must
    /// agree with `kind`.
    pub fn from_toml_str(text: &str, kind: Kind) -> Result<Self, HarnessError> {
        let raw: RawSpec = toml::from_str(text)?;
        if let Some(k) = raw.kind {
            if k != kind {
                return Err(HarnessError::Config(format!("config is for `{k}`, not `{kind}`")));
            }
        }
        let mut spec = Self::defaults(kind);
        overlay!(spec, raw, size, eps, mass, lambda_grid, order, points, n_terms, gamma, four_point_stride, four_point_max, output_dir);
        overlay!(spec.sim, raw, dt, burn_in, n_samples, thinning, seed, n_batches, n_chains);
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path, kind: Kind) -> Result<Self, HarnessError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?, kind)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.lambda_grid.is_empty() {
            return bad("lambda_grid is empty".into());
        }
        if self.lambda_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return bad(format!("lambda_grid {:?} is not strictly increasing", self.lambda_grid));
        }
        let floor_ok = |l: f64| l.is_finite() && if self.kind == Kind::Toy { l >= 0.0 } else { l > 0.0 };
        if let Some(l) = self.lambda_grid.iter().find(|l| !floor_ok(**l)) {
            return bad(format!("lambda = {l} is not allowed for `{}`", self.kind));
        }
        if !(self.gamma > 0.0 && self.gamma < 2.0) {
            return bad(format!("gamma = {} outside (0, 2)", self.gamma));
        }
        if self.points == 0 {
            return bad("points must be at least 1".into());
        }
        if self.sim.n_chains == 0 {
            return bad("n_chains must be at least 1".into());
        }
        self.lattice()?;
        Ok(())
    }

    pub fn lattice(&self) -> Result<TorusLattice, HarnessError> {
        Ok(TorusLattice::new(self.size, self.eps, self.mass)?)
    }

    /// Chain config at one grid point. Every grid point shares the seed, so
    /// the noise is common across `lambda` and ratios between points are
    /// less noisy than the points themselves.
    pub fn sim_config(&self, lambda: f64) -> Result<SimConfig, HarnessError> {
        let s = &self.sim;
        let cfg = SimConfig {
            dt: s.dt,
            burn_in: s.burn_in,
            n_samples: s.n_samples,
            thinning: s.thinning,
            seed: s.seed,
            n_batches: s.n_batches,
            ..SimConfig::new(self.lattice()?, lambda)
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn four_point_configs(&self) -> Result<BoundaryConfigs, HarnessError> {
        Ok(BoundaryConfigs::four_point_grid(&self.lattice()?, self.four_point_stride, self.four_point_max))
    }
}

/// The `simulate` subcommand's config, mirroring [`SimConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub sim: SimConfig,
    /// Four-point placements on a sub-grid of this stride; 0 disables them.
    pub four_point_stride: usize,
    pub four_point_max: usize,
    /// Record the remainder-diagram estimators as well.
    pub remainders: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    size: Option<f64>,
    eps: Option<f64>,
    mass: Option<f64>,
    lambda: Option<f64>,
    dt: Option<f64>,
    burn_in: Option<usize>,
    n_samples: Option<usize>,
    thinning: Option<usize>,
    seed: Option<u64>,
    n_batches: Option<usize>,
    four_point_stride: Option<usize>,
    four_point_max: Option<usize>,
    remainders: Option<bool>,
}

impl SimulationSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let raw: RawSimulation = toml::from_str(text)?;
        let lat = TorusLattice::new(raw.size.unwrap_or(8.0), raw.eps.unwrap_or(1.0), raw.mass.unwrap_or(1.0))?;
        let mut sim = SimConfig::new(lat, raw.lambda.unwrap_or(0.1));
        overlay!(sim, raw, dt, burn_in, n_samples, thinning, seed, n_batches);
        sim.validate()?;
        Ok(Self {
            sim,
            four_point_stride: raw.four_point_stride.unwrap_or(0),
            four_point_max: raw.four_point_max.unwrap_or(8),
            remainders: raw.remainders.unwrap_or(false),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn probes(&self) -> Probes {
        let four_point = (self.four_point_stride > 0).then(|| {
            BoundaryConfigs::four_point_grid(&self.sim.lattice, self.four_point_stride, self.four_point_max)
        });
        Probes {
            two_point_remainder: self.remainders,
            four_point_remainder: self.remainders && four_point.is_some(),
            four_point,
        }
    }
}
