//! Quantum annealing under Markovian decoherence with dual-state
//! purification error mitigation.
//!
//! The crate simulates the periodic XXZ chain annealed from a transverse
//! field driver, integrates the GKSL master equation with uniform Pauli
//! noise, and estimates the problem energy either directly (conventional
//! schedule) or through the mitigated ratio estimator on the RQA-based and
//! EMQA schedules.

pub mod analytic;
pub mod error;
pub mod evolve;
pub mod experiment;
pub mod model;
pub mod pauli_algebra;
pub mod purify;
pub mod schedule;

pub use error::{Error, Result};
