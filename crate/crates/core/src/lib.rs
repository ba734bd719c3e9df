//! Finite-truncation engine for operator-valued tau functions.
//!
//! Coefficients live in `C(Y)` for a finite set `Y` of `m` points, so every
//! operator-valued quantity is an `m`-tuple of ordinary complex quantities.

pub mod cli;
pub mod crossratio;
pub mod error;
pub mod grassmann;
pub mod kpcheck;
pub mod opalgebra;
pub mod rng;
pub mod schwarzian;
pub mod tauflow;
pub mod wick;

pub use error::{Error, Result};
