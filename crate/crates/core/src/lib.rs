#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod constants;
pub mod error;
pub mod evolve;
pub mod fiber;
pub mod green;
pub mod linalg;
pub mod par;
pub mod phase_space;
pub mod resolvent;
pub mod special;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Library version, embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
