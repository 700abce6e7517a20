//! Deterministic numerical kernels shared by every other module: dense
//! row-major matrices, largest-singular-value estimation by power iteration,
//! direct-summation 2-D DFTs, and seedable random streams with a
//! (seed, position) reproducibility contract.

mod dft;
mod matrix;
mod rng;
mod svd;

pub use dft::{dft2, ComplexGrid};
pub use matrix::Matrix;
pub use rng::RngStream;
pub use svd::largest_singular_value;
