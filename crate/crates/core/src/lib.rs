//! Construction and verification of 2×2 hypergeometric matrix Bochner pairs.

pub mod algebra;
pub mod classify;
pub mod darboux;
pub mod error;
pub mod ops;
pub mod quad;
pub mod recurrence;

pub use error::{BochnerError, Result};
