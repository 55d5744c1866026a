//! Lattice Φ⁴ in two dimensions: periodic lattice numerics, the symbolic
//! integration-by-parts expansion of correlation functions, diagram
//! evaluation, Langevin sampling and discrete Besov norms.

pub mod lattice;

pub use lattice::{
    apply_green, convolve, discrete_laplacian, green_function, wick_constant, KernelCache,
    LatticeError, LatticeField, SpectralMultiplier, TorusLattice,
};
pub mod graph;
pub mod stats;
pub mod diagram;
pub mod langevin;
pub mod besov;
pub mod toy;
