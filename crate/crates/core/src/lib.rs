//! Numerical toolkit for the spatial Kepler problem under axially and
//! reflection-symmetric perturbations.

pub mod cli;
pub mod criteria;
pub mod error;
pub mod flow;
pub mod kepler;
pub mod model;
pub mod orbits;
pub mod quad;
pub mod report;
pub mod retmap;
pub mod roots;

pub use error::{Error, Result};
