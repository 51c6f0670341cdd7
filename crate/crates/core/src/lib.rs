//! One-dimensional Bohmian mechanics laboratory.
//!
//! The crate is layered bottom-up:
//!
//! * [`field`]: uniform grids, wavefunctions, density/current/CDF fields and
//!   quantile inversion.
//! * [`spectral`]: bound states of the finite-difference Hamiltonian.
//! * [`evolve`]: Crank–Nicolson propagation under a ramped, localized
//!   perturbation, with adiabatic fidelity and continuity diagnostics.
//! * [`bohm`]: guidance-equation trajectories and their quantile-tracking
//!   counterpart, integrated over whole ensembles.
//! * [`protect`]: the protective-measurement experiment comparing time
//!   averages along single trajectories with ensemble averages.
//!
//! With the default `parallel` feature, ensembles and independent runs are
//! spread over a rayon pool; without it every loop runs sequentially.

pub mod bohm;
pub mod error;
pub mod evolve;
pub mod field;
pub mod par;
pub mod protect;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{
    build_grid, density_current, normalize, overlap, quantile, DensityFields, Grid,
    PhysicalConstants, Wavefunction,
};

pub use num_complex::Complex64;
