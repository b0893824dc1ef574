//! Sabra shell model of turbulence with its quotient by temporal scalings.
//!
//! The crate integrates the forced/viscous shell model, maps trajectories to the
//! normalized (scale-free) representation `U_n^(m)` with synchronized times, and turns
//! multiplier statistics into scaling exponents through the dominant eigenvalue of a
//! discretized transfer operator.
//!
//! Numerical routines are generic over [`Real`] (`f32` or `f64`); the aliases below fix
//! the double-precision instantiation used by the command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod format;
pub mod integrator;
pub mod normalize;
pub mod perron;
pub mod scalar;
pub mod shell;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::{Cx, Real};

/// Double-precision shell state.
pub type State = shell::ShellState<f64>;
/// Double-precision trajectory.
pub type Trajectory = integrator::Trajectory<f64>;
/// Double-precision rescaled frame.
pub type RescaledFrame = normalize::RescaledFrame<f64>;
