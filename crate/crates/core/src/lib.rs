#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod infer;
pub mod learn;
pub mod model;
pub mod splines;
pub mod synthetic;
pub mod timefind;
pub mod timegrid;

pub use error::{Error, Result};
