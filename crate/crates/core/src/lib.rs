//! Pseudo-spectral evolution of near-FLRW solutions of the Einstein–massless
//! scalar field equations with positive cosmological constant on the 3-torus.

pub mod acceptance;
pub mod background;
pub mod config;
pub mod constraints;
pub mod diagnostics;
pub mod error;
pub mod evolution;
mod frame_ops;
pub mod grid;
pub mod harness;
pub mod initial_data;
pub mod state;

pub use error::{Result, SimError};
