//! Importance-aware SU/MU-MIMO link simulation with SVD precoding.
//!
//! The building blocks are a small dense complex matrix type with a Jacobi
//! SVD, Rayleigh channel sampling, single-user and multi-user precoders,
//! importance-driven feature scheduling and pilot-based channel estimation.
//! The `harness` module ties them into Monte Carlo experiments.

pub mod channel;
pub mod cmatrix;
pub mod config;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod mu_precoder;
pub mod report;
pub mod rng;
pub mod scheduler;
pub mod su_precoder;

pub use cmatrix::{CMatrix, Complex, SvdTriple};
pub use error::{Error, Result};
