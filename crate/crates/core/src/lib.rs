//! Perron, Floquet and Hamilton-Jacobi eigenvalues of the affine-controlled
//! linear system `x' = (G + alpha(t) F) x` on three compartments.

pub mod control;
pub mod error;
pub mod floquet;
pub mod hjb;
pub mod perron;
pub mod simplex;
pub mod spectral;

pub use error::{Error, Result};
pub use spectral::{ModelParams, RunningRates, SpectralTriple};
