//! Expected-utility portfolio selection on finite scenario trees.

// `!(a <= b)` is used on purpose so that NaN takes the failing branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod market;
pub mod numeric;
pub mod orlicz;
pub mod solvers;
pub mod utility;
pub mod verify;

pub use error::{Error, Result};
