//! Analysis toolkit for disturbance-observer (DOB) based robust control.
//!
//! The crate is layered bottom-up:
//!
//! * [`tf`] – polynomials, rational/delayed transfer functions, responses.
//! * [`model`] – uncertainty weight, plant family, DOB filter, loop construction.
//! * [`stability`] – closed-loop stability (roots or Nyquist winding).
//! * [`integral`] – Bode/Poisson sensitivity integrals and their tail bounds.
//! * [`solver`] – bandwidth constraints, literal and sweep backends.
//! * [`sim`] – fixed-step time-domain simulation of the closed loops.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod integral;
pub mod model;
pub mod sim;
pub mod solver;
pub mod stability;
pub mod tf;
mod units;

pub use units::LogConvention;
