//! Pseudo-spectral solver for forced incompressible flow in a periodic box,
//! plus the diagnostics built on top of it: spectral moments and their
//! ratios, good/bad/dangerous time-interval classification, width and
//! scaling-law predictions, and a run-level invariant verifier.
//!
//! The crate is organised bottom-up:
//! - [`spectral`]: wavenumber grid, coefficient fields, transforms, norms;
//! - [`dynamics`]: narrow-band forcing, the momentum tendency, time stepping;
//! - [`diagnostics`]: moment functionals and per-sample observables;
//! - [`intervals`]: time-interval classification and interval algebra;
//! - [`scaling`]: closed-form exponents, widths, and bound predictions;
//! - [`harness`]: run orchestration, artifacts, and the verify suite.

pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod harness;
pub mod intervals;
pub mod scaling;
pub mod spectral;
