//! Analytic torsion of ℤ₂-graded elliptic complexes on flat tori.
//!
//! The crate reduces twisted de Rham, twisted Dolbeault and constant
//! superconnection complexes to finite matrices per Fourier mode, computes
//! their spectra, and assembles zeta-regularized determinants either from
//! exact Epstein/Hurwitz continuations or from fitted heat traces.
//!
//! It is `no_std` (with `alloc`); IO and threading live in the `torsionlab`
//! companion crate.

#![no_std]

extern crate alloc;

pub mod complex;
pub mod error;
pub mod exec;
pub mod exterior;
pub mod geometry;
pub mod linalg;
pub mod special;
pub mod spectral;
pub mod torsion;
pub mod zeta;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
pub use linalg::{CMatrix, RMatrix, C64};
