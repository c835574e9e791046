//! Coupled Wright-Fisher diffusion and its moment dual.
//!
//! The crate provides the diffusion (drift, covariance, generator,
//! Euler-Maruyama simulation), the pure-jump dual process (rate enumeration
//! and Gillespie simulation), the stationary moment function `k` through
//! several interchangeable oracles, the stationary density, and a harness
//! that checks the duality both exactly at the generator level and by Monte
//! Carlo at the level of expectations.

pub mod diffusion;
pub mod dual;
pub mod error;
pub mod exec;
pub mod harness;
pub mod io;
pub mod kfun;
pub mod model;
pub mod quadrature;
pub mod specfun;
pub mod stationary;
pub mod stats;

pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{DualState, FrequencyState, Layout, ModelParams, MutationSpec};
