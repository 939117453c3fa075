//! Thermal surrogate pipeline for directed-energy-deposition builds on
//! voxel grids: procedural parts, a serpentine toolpath, an explicit
//! finite-volume heat solver with element activation, heat-affected window
//! extraction, and a 3D Fourier neural operator trained on those windows.

pub mod error;
pub mod fno;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod metrics;
pub mod thermal;
pub mod toolpath;
pub mod windowing;

pub use error::{Error, Result};
pub use grid::{Coord, Dims};
