//! Safety filtering for control-affine stochastic systems whose safe sets
//! are Boolean (min/max) compositions of smooth barrier functions.
//!
//! The pieces, bottom up:
//!
//! - [`dynamics`]: Ito SDE models and seeded Euler-Maruyama simulation.
//! - [`barrier`]: min/max trees over smooth barrier leaves, their
//!   derivatives and the reciprocal transform `B = 1/h`.
//! - [`qp`]: an exact working-set solver for the small projection QPs.
//! - [`filter`]: the min-norm safety filter assembling one constraint row
//!   per almost-active leaf.
//! - [`scenario`]: the two benchmark setups (Boolean coverage navigation,
//!   multi-agent antipodal swap).
//! - [`montecarlo`]: seeded trial batches and their summary statistics.

pub mod barrier;
pub mod dynamics;
mod error;
pub mod filter;
pub mod montecarlo;
pub mod qp;
pub mod scenario;

pub use error::{Error, Result};
