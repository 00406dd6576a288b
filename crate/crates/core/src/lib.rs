//! Design and verification of fast trap-splitting protocols: two-level
//! control laws, their mapping onto a lattice-plus-harmonic potential, and
//! direct propagation of the resulting wavefunctions.

pub mod config;
pub mod csvio;
pub mod error;
pub mod ffsplit;
pub mod interp;
pub mod lattice1d;
pub mod mapping;
pub mod nelder_mead;
pub mod protocols;
pub mod quad;
pub mod tdse;
pub mod tridiag;
pub mod twolevel;
pub mod units;

pub use error::{Error, Result};
