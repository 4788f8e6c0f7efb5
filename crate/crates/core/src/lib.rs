//! Doubly mean-reflected G-BSDE toolkit.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: time grids, grid curves, bounded-variation paths, Stieltjes sums;
//! - [`skorokhod`]: explicit two-barrier Skorokhod maps (forward and backward),
//!   minimality verification and an iterated-reflection oracle;
//! - [`gexp`]: the sublinear expectation engine (G-heat equation, classical
//!   and scenario backends);
//! - [`reflect`]: the mean-reflection operators `Hbar`, `L_t`, `U_t` and the
//!   backward Skorokhod problem at the expectation level;
//! - [`bsde`]: unreflected Markovian G-BSDE solves plus diagnostic checks;
//! - [`dmr`]: Picard fixed-point solvers for the doubly mean-reflected
//!   systems (scalar, truncated, multi-dimensional diagonal);
//! - [`cli`]: configuration parsing, presets, CSV emission and the self-test.

pub mod error;
pub mod grid;
pub mod rng;
pub mod skorokhod;
pub mod gexp;
pub mod reflect;
pub mod bsde;
pub mod dmr;
pub mod expr;
pub mod config;
pub mod cli;
pub mod selftest;

pub use error::{Error, Result};
