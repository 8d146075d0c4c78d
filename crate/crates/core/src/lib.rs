//! Synthetic image dataset generation from procedural 3D meshes and 2D
//! iterated-function-system fractals.

pub mod dataset;
pub mod error;
pub mod fractal2d;
pub mod geometry;
pub mod imageio;
pub mod morphgen;
pub mod procgen;
pub mod renderer;
pub mod rng;

pub use error::{Error, Result};
