//! Multidimensional (space x uncertainty) Galerkin POD for PDEs with
//! multivariate random coefficients.
//!
//! The crate builds Polynomial-Chaos quadrature spaces, runs full-order
//! decoupled parametric sweeps, extracts mass-weighted optimal POD bases per
//! tensor dimension, assembles and solves reduced Galerkin systems, and
//! computes expected values and variances of observables, with Monte Carlo
//! and random-snapshot baselines for comparison.
//!
//! Modules, bottom up:
//!
//! * [`tensor`]: dense N-way coefficient tensors and their mode algebra,
//! * [`quadrature`]: Gauss rules for uniform probability measures, Lagrange
//!   nodal bases, diagonal mass matrices and factors,
//! * [`pod`]: weighted norms, per-dimension POD bases, projections and the
//!   truncation error bound,
//! * [`models`]: parametric discrete models `alpha -> (A, f, C)`,
//! * [`uq`]: parametric sweeps, statistics, reduced Galerkin systems,
//!   Monte Carlo and random-snapshot baselines.

pub mod linsolve;
pub mod models;
pub mod pod;
pub mod quadrature;
pub mod tensor;
pub mod uq;

pub use pod::{pod_basis, project, reduce, weighted_norm, DimReduction, PodBasis};
pub use quadrature::{gauss_rule, mass_factor, tensor_grid, MassFactor, QuadratureRule, UniformMeasure};
pub use tensor::CoeffTensor;
