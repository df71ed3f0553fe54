//! Joint estimation of a restored 2D+time image and the scalar weight
//! balancing spatial against spatio-temporal regularization.
//!
//! The restoration cost couples a frame-wise deconvolution data term with an
//! infimal-decomposition regularizer whose relative weight is itself an
//! optimization variable, kept in (0, 1) by a logarithmic barrier. An outer
//! loop alternates a closed-form weight update with an ADMM solve of the
//! convex image sub-problem; a first-order (gradient based) baseline shares
//! the same machinery. A simulation kit generates synthetic measurement
//! volumes with an NA-parameterized PSF and mixed Poisson-Gaussian noise,
//! and the `pstaic` binary drives simulate / restore / report pipelines.

pub mod admm;
pub mod bench;
pub mod error;
pub mod fft;
pub mod grid;
pub mod io;
pub mod linops;
pub mod metrics;
pub mod prox;
pub mod restore;
pub mod sim;
pub mod weights;

pub use error::{Error, Result};
