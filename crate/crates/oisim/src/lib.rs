//! Map-facilitated optimal identification of N-level quantum systems.
//!
//! The library simulates the closed loop that shapes a control pulse so the
//! population data it produces pins down the system's internal Hamiltonian
//! and dipole matrix elements as tightly as possible: noisy lab data is
//! simulated, a first-order cut-HDMR surrogate stands in for repeated
//! Schrödinger solves, a steady-state GA extracts the family of parameter
//! vectors consistent with the data, and an outer GA turns the pulse knobs to
//! shrink that family.

pub mod artifacts;
pub mod config;
pub mod datasim;
pub mod eig;
pub mod error;
pub mod ga;
pub mod hdmr;
pub mod inversion;
pub mod jsonnum;
pub mod oi;
pub mod propagate;
pub mod pulse;
pub mod rngstream;
pub mod spline;
pub mod system;

pub use error::{Error, Result};
