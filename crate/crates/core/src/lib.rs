// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod objective;
pub mod sampler;
pub mod schedule;
pub mod score;
pub mod scorenet;
pub mod target;
pub mod trainer;

pub use error::{Error, Result};
