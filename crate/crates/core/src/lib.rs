//! Sparse fused Plackett-Luce estimation.

pub mod data;
pub mod error;
pub mod likelihood;
pub mod optimizer;
pub mod penalty;
pub mod prediction;
pub mod selection;
pub mod simulation;

pub use error::{Error, Result};
