//! Experiment harness for the lattice Φ⁴ laboratory: flat-file configs,
//! one runner per experiment kind, and reports written as CSV tables plus a
//! gnuplot script.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{ExperimentSpec, Kind, SimSettings, SimulationSpec};
pub use experiments::{
    run, run_asymptoticity, run_expand, run_four_point, run_oracle_suite, run_simulation, run_toy, run_toy_grid,
    run_two_point,
};
pub use report::{Check, Plot, Report, Table};

use phi4_core::besov::BesovError;
use phi4_core::diagram::DiagramError;
use phi4_core::graph::GraphError;
use phi4_core::langevin::SimError;
use phi4_core::toy::ToyError;
use phi4_core::LatticeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Besov(#[from] BesovError),
    #[error(transparent)]
    Toy(#[from] ToyError),
}
