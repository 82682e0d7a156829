//! Spectral simulation of two-dimensional MHD perturbations of Couette
//! flow in the moving frame, with the Fourier-multiplier energy machinery
//! and an experiment harness for decay, amplification and threshold
//! studies.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod linear;
pub mod multipliers;
pub mod nonlinear;
pub mod output;
pub mod params;
pub mod propagator;
pub mod spectral;

pub use error::{Error, Result};
pub use params::{PhysicalParams, Regime};
pub use spectral::{Grid, MhdState, SpectralField, C64};
