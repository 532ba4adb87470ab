//! One-dimensional finite-volume solver for a coupled substrate /
//! biomass system of Cahn-Hilliard type with logarithmic free energy,
//! degenerate mobility, and Monod reaction kinetics.
//!
//! The library provides the regularized potential family, the BDF2
//! finite-volume discretization (two model variants), a damped Newton
//! solver with an analytic block-tridiagonal Jacobian, energy/entropy
//! diagnostics, and a harness for the built-in experiments including
//! mesh and time-step convergence studies.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod harness;
pub mod params;
pub mod potential;
pub mod scheme;
pub mod solver;
