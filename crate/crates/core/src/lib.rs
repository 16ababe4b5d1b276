//! Steady channel flow for power-law (shear-thickening) fluids at desk scale.
//!
//! The library builds planar outlet domains with graph walls, constructs
//! divergence-free flux-carrier fields with certified flux, discretizes the
//! regularized momentum system with a mixed quadratic/linear element pair,
//! solves it by Picard iteration with Newton acceleration, and post-processes
//! energy-growth, slice-dissipation, and comparison-inequality diagnostics.
//! A separate lab estimates the constants of the underlying functional
//! inequalities (Korn, Poincaré, divergence right-inverse, monotonicity).

pub mod carrier;
pub mod diagnostics;
pub mod fem;
pub mod geometry;
pub mod ineqlab;
pub mod numerics;
pub mod solver;
pub mod vtk;
