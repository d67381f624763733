//! Highlight extraction for popular music with chunk-level attention.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
mod error;
pub mod evaluation;
pub mod extraction;
mod fsutil;
pub mod models;
pub mod training;

pub use error::{Error, Result};
pub use fsutil::write_atomic;
