// `!(a > b)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod data;
pub mod distance;
pub mod error;
pub mod explain;
pub mod generator;
pub mod models;
pub mod optimizer;
pub mod weights;

pub use error::{Error, Result};
