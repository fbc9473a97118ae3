//! Domain-decomposition operator splitting for degenerate parabolic equations.

pub mod banded;
pub mod decomposition;
pub mod error;
pub mod grid;
pub mod harness;
pub mod integrators;
pub mod operators;
pub mod resolvent;
pub mod vectorfields;

pub use error::{Error, Result};
