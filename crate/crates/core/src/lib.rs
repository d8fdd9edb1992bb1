//! Nash-type inequalities, on-diagonal heat kernel bounds and Davies-type
//! off-diagonal bounds, checked exactly on finite symmetric Markov chains.

// `!(x > 0.0)` is used on purpose so that NaN lands in the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod davies;
pub mod error;
pub mod forms;
pub mod models;
pub mod nash_verify;
pub mod profiles;
pub mod report;
pub mod semigroup;

pub use error::{Error, Result};
