//! Two-phase Darcy flow for CO2 injection into a brine-filled reservoir.
//!
//! Gas saturation is advanced explicitly with isogeometric L2 projections
//! whose mass matrix factors into 1D banded pieces. Pressure comes from one
//! of two interchangeable solvers: a Galerkin B-spline system solved with
//! preconditioned conjugate gradients, or a collocation network trained on a
//! Gram-weighted discrete weak residual.

pub mod crvpinn;
pub mod driver;
pub mod io;
pub mod pressure_direct;
pub mod projection;
pub mod reservoir;
pub mod saturation;
pub mod spline;
