//! Numerical engine for skew CR-submanifolds of almost contact metric spaces
//! and their warped-product structure.

pub mod ambient;
pub mod cli;
pub mod error;
pub mod exprdsl;
pub mod immersion;
pub mod linalg;
pub mod skewcr;
pub mod tolerances;
pub mod warped;

pub use error::{Error, Result};
pub use tolerances::Tolerances;
