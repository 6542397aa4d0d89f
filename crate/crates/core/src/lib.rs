//! Functional and cost model of a flexible-precision bit-parallel accelerator.

pub mod arch;
pub mod bitpack;
pub mod codec;
pub mod control;
pub mod cost;
pub mod error;
pub mod pe;
pub mod sweep;
pub mod validate;
pub mod workloads;

pub use error::{Error, Result};
