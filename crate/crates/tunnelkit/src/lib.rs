//! Numerical toolkit for two-dimensional magnetic Dirac operators with radial
//! flux, decomposed into angular-momentum channels.
//!
//! The pipeline: a [`fields::FluxProfile`] fixes the magnetic data, an
//! [`perturbation::AngularCoupling`] carries the Fourier modes of the
//! perturbation, [`tuning`] picks the internal constants, [`assembly`] builds
//! the channel-block operators and [`spectral`] / [`verify`] run the
//! projections, weights and tunneling diagnostics on top.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod error;
pub mod fields;
pub mod inequalities;
pub mod linalg;
pub mod par;
pub mod partition;
pub mod perturbation;
pub mod regions;
pub mod smooth;
pub mod spectral;
pub mod tuning;
pub mod verify;

pub use error::{Error, Result};
pub use faer::c64;
