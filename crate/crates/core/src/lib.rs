//! Energy-optimal hardware configuration search for edge inference.
//!
//! The crate is `no_std` (with `alloc`) and contains every algorithm of the
//! toolkit: a simulated DVFS edge device, Gaussian-process surrogates,
//! constrained Bayesian optimization over the discrete frequency grid, the
//! non-negative linear interference model used to gate fine-tuning, arrival
//! process generators and a discrete-event scheduler simulation.
//!
//! File formats, profile loading and the command line live in the companion
//! `edgetune` crate.
#![no_std]
#![deny(unsafe_code)]
// NaN-rejecting `!(x > 0.0)` checks and index loops are deliberate in the numerics
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod cbo;
pub mod device;
mod error;
pub mod gp;
pub mod linalg;
pub mod perf;
pub mod rng;
pub mod sched;
pub mod stats;
pub mod workload;

pub use error::{Error, Result};
