//! Simultaneous multi-knockoffs for FDR-controlled feature selection.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diag;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod importance;
pub mod linalg;
pub mod rng;
pub mod scip;
pub mod selection;
pub mod swap;

pub use error::{Error, Result};
