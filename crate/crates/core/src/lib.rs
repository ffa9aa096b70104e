//! Networked interactive POMDPs.

// Validation writes `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod domains;
pub mod error;
pub mod frame;
pub mod ipomdp;
pub mod net;
pub mod pomdp;
pub mod random;
pub mod scenario;
pub mod solver;
pub mod value;

pub use error::{Error, Result};
