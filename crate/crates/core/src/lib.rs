//! Simulation and analysis of photon triplets from cascaded down-conversion.
//!
//! * [`fock`]: four-mode Fock-space model of the two-stage process
//! * [`phasematch`]: quasi-phase-matching tuning curves and poling-period fit
//! * [`budget`]: analytic rate, efficiency and dark-count budget
//! * [`detection`]: Monte Carlo of the gated D1 → D2 → D3 detector chain
//! * [`histogram`]: triple-coincidence histogram analysis and CSV I/O
//! * [`config`]: strict experiment-file loading

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod budget;
pub mod config;
pub mod detection;
pub mod error;
pub mod exec;
pub mod fock;
pub mod histogram;
pub mod phasematch;
pub mod rng;

pub use error::{Error, Result};
pub use exec::Execution;
