//! Recovery of signals that are sparse in a general transform domain from
//! subsampled linear measurements.
//!
//! The crate is organized bottom-up:
//!
//! * [`linop`] linear operators (DFT, Haar, circular finite differences,
//!   circulant filter banks, dense matrices) with forward, adjoint,
//!   pseudo-inverse and `(T†)*` actions.
//! * [`spectra`] incoherence parameters, sampling densities and the
//!   closed-form sample-complexity and noise-amplification expressions.
//! * [`sampling`] reproducible i.i.d. multiset draws and sampling operators.
//! * [`solver`] ADMM for the ℓ1 / mixed-norm recovery programs.
//! * [`certify`] golfing-scheme dual certificates and deviation estimates.
//! * [`bench`] signal synthesis, phantom rendering, Monte Carlo grids and
//!   plotting/serialization helpers used by the `tsparse` CLI.

pub mod bench;
pub mod certify;
pub mod error;
pub mod groups;
pub mod linop;
pub mod sampling;
pub mod solver;
pub mod spectra;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Euclidean norm of a complex vector.
pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Max-modulus norm of a complex vector.
pub fn norm_inf(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `⟨a, b⟩ = Σ conj(a_i) b_i`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
