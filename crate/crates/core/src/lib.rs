//! Simulation and verification of linear stochastic port-Hamiltonian
//! systems on an interval, with a damped vibrating string as the
//! reference benchmark.

// `!(x > 0.0)` rejects NaN; index loops mirror the matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod lift;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod noise;
pub mod solver;
pub mod spectral;
pub mod string;

pub use error::{Error, Result};
