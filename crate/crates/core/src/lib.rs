//! One-bit compressed sensing reconstruction toolkit.
//!
//! Recovers sparse complex signals from the componentwise signs of noisy
//! linear measurements. The main solver is a sparse-Bayesian-learning EM
//! loop on a Bussgang-style linearization of the quantizer, for single and
//! multiple snapshots; a BIHT baseline and a ULA direction-of-arrival
//! benchmark harness round out the crate.

pub mod biht;
pub mod bsbl;
pub mod doa;
pub mod error;
pub mod linalg;
pub mod model;

pub use error::{Error, Result};
