//! Density control of large swarms on the periodic square by continuification:
//! design the control on a continuum density model, then sample it back to
//! the individual agents.

pub mod bounds;
pub mod control;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod kernels;
pub mod macro_sim;
pub mod micro;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{GridSpec, Point, ScalarField, VectorField};
