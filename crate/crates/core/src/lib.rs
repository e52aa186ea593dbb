//! Numerical checks for regularity structures built on general semigroups.

pub mod error;
pub mod geometry;
pub mod grid;
pub mod conv;
pub mod semigroup;
pub mod besov;
pub mod structure;
pub mod model;
pub mod reconstruction;
pub mod kernel;
pub mod schauder;
pub mod harness;

pub use error::{Error, Result};
