//! Geometric stability certificates for drifting finite MDPs and
//! homotopy-tracking learners driven by replay-based geometry proxies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod error;
pub mod geometry;
pub mod mdp;
pub mod metric;
pub mod path;
pub mod scheduler;

pub use error::{Error, Result};
