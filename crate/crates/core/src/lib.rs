//! Numerical core for continuous-time dynamic discrete choice models.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure
//! computation:
//!
//! * [`sparse`]: COO/CSR storage with frozen sparsity patterns and SpMV.
//! * [`ctmc`]: generator validation, uniformization, Poisson truncation and
//!   the action of `exp(ΔQ)` on a vector together with parameter derivatives.
//! * [`model`]: game specifications, aggregate generator assembly and the two
//!   built-in models (single-agent renewal, N-firm entry/exit).
//! * [`solver`]: Bellman operators, value iteration, the uniform
//!   representation, policy evaluation, Newton-Kantorovich and relative value
//!   iteration.
//! * [`inference`]: trajectory simulation, snapshot sampling, transition
//!   counts, the snapshot log likelihood with analytic gradient, a bounded
//!   quasi-Newton optimizer and the Monte Carlo harness.
//!
//! State indices are 0-based everywhere.

#![no_std]

extern crate alloc;

pub mod ctmc;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod solver;
pub mod sparse;
pub mod special;

mod error;

pub use error::{Error, Result};
