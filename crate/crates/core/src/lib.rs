// NaN-rejecting `!(x > 0.0)` guards are deliberate, and reference constants
// keep every digit they were computed to.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod crra;
pub mod equilibrium;
pub mod io;
pub mod error;
pub mod market;
pub mod numerics;
pub mod preference;
pub mod surface;
pub mod verify;

pub use error::{ErrorCategory, GdaError, Result};
