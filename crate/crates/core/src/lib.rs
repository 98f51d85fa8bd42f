//! Thresholding-based iterative selection procedures (TISP) for sparse
//! penalized linear regression.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod rng;
pub mod solver;
pub mod theory;
pub mod thresholds;
pub mod tuning;

pub use error::{Error, ErrorClass, Result};
