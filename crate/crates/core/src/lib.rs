//! Simulation and numerical verification toolkit for edge-reinforced random
//! walks and vertex-reinforced jump processes on directed graphs carrying a
//! vertex involution `i ↦ i*`.

pub mod cli;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod linalg;
pub mod manifold;
pub mod measures;
pub mod quadrature;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
