//! Matrix-free stochastic trace estimation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod lanczos;
pub mod linop;
pub mod nystrom;
pub mod rangefinder;
pub mod sketch;
pub mod special;

pub use error::{Result, TraceError};
