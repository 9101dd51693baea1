//! ℓ⁴-norm maximization over the unit sphere for overcomplete (ODL) and
//! convolutional (CDL) dictionary learning.
//!
//! The crate is organised the way the problem is:
//!
//! - [`model`]: dictionaries, Bernoulli-Gaussian codes, sphere points and the
//!   scalar diagnostics (coherence, spikiness, tight-frame residual).
//! - [`objective`]: the finite-sample objective `φ_DL`, its population limit
//!   `φ_T`, and their Riemannian gradients and Hessians.
//! - [`cdl`]: circulant operators, the spectral preconditioner and the FFT
//!   implementation of the CDL objective.
//! - [`optimize`]: power method, projected Riemannian gradient descent,
//!   Lanczos-based saddle escape and the data-driven CDL initialization.
//! - [`landscape`]: numerical checks of the landscape geometry (regions,
//!   cubic critical-point conditions, curvature certificates).
//! - [`recovery`]: recovery metrics, full-dictionary recovery by repeated
//!   trials and shift/sign alignment of recovered filters.
//! - [`harness`]: data generation, sweeps and the file formats used by the
//!   `sphere4` binary.
//!
//! Every randomized routine takes an explicit 64-bit seed; see [`rng`].

pub mod cdl;
pub mod error;
pub mod fft;
pub mod harness;
pub mod io;
pub mod landscape;
pub mod model;
pub mod objective;
pub mod optimize;
pub mod recovery;
pub mod rng;

pub use error::{Error, Result};
pub use model::{Dictionary, FilterBank, ObservationSet, SparseCode, SpherePoint};
pub use objective::{OdlObjective, SphereObjective, TensorObjective};

/// Largest dimension for which dense Riemannian Hessians are materialized.
pub const DENSE_HESSIAN_MAX_DIM: usize = 4096;
