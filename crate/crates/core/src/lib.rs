//! Stein-method total-variation bounds for negative binomial approximation
//! of sums of independent count variables, with exact and Monte Carlo
//! oracles and the (k1,k2)-event waiting-time application.

// `!(x > 0.0)` is used on purpose to reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod k1k2;
pub mod oracle;
pub mod dist;
pub mod error;
pub mod matching;
pub mod moments;
pub mod numeric;
pub mod pmf;
pub mod steinop;

pub use error::{Error, Result};
