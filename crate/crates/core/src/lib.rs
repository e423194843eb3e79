//! Minimum time-fuel cruise trajectories for a point-mass aircraft in a
//! planar wind field, solved with Pontryagin's maximum principle.
//!
//! The indirect solver optimises the initial heading and the switching times
//! of a max-thrust / singular / min-thrust throttle schedule. Heading follows
//! the Zermelo law and the singular throttle is a state feedback built from
//! the algebraically solved co-state. A single-shooting Euler direct method
//! is provided as an independent baseline.

// `!(a < b)` is used on purpose wherever NaN must fail a check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atmosphere;
pub mod direct;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod io;
pub mod optim;
pub mod pmp;
pub mod run;
pub mod scenario;
pub mod solver;
pub mod wind;

pub use error::{Error, Result};
