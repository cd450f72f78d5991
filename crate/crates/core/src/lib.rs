//! Elastic wave propagation and scattering in anisotropic polycrystals:
//! Christoffel analysis, single-scattering cross-sections and a radiative
//! transfer Monte Carlo solver.

pub mod christoffel;
pub mod correlation;
pub mod grid;
pub mod material;
pub mod quadrature;
pub mod scattering;
pub mod transport;
