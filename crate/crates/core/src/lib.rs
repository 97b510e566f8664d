#![no_std]

extern crate alloc;

pub mod backtest;
pub mod copulas;
pub mod error;
pub mod estimation;
pub mod generators;
pub mod hierarchical;
pub mod kendall;
pub mod levelset;
pub mod matrix;
pub mod numeric;
pub mod rng;
pub mod special;
pub mod stats;

pub use error::{Error, Result, StructureError};
pub use matrix::DataMatrix;
