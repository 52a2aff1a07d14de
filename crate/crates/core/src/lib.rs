//! Space-filling designs for robustness experiments.
//!
//! The crate builds experimental designs for computer experiments with control
//! and noise factors and scores them under a Gaussian-process model:
//!
//! - [`dist`]: noise distributions, the inverse-probability transform and the
//!   Beta-warped double transform;
//! - [`gp`]: designs, Gaussian correlation, kriging prediction and fitting;
//! - [`criteria`]: density-weighted IMSE / IRMSE criteria, max-min efficiency
//!   and the closed-form criterion for internal noise;
//! - [`generators`]: Latin hypercube searches, cross arrays, jittered cross
//!   arrays and the noise-array constructions;
//! - [`study`]: robust-setting search and the simulated comparison study;
//! - [`io`]: the design CSV format, profile output and study configuration.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod criteria;
pub mod dist;
pub mod error;
pub mod generators;
pub mod gp;
pub mod io;
mod optim;
pub mod quadrature;
pub mod study;

pub use dist::{BetaWarp, EmpiricalCdf, NoiseModel};
pub use error::{Error, Result};
pub use gp::{CorrelationFactor, CorrelationParams, Design, FactorSpec, FitOptions, KrigingModel, Role, Transform};
pub use quadrature::QuadratureSpec;
