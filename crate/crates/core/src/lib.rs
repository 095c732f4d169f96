//! Low-rank phase retrieval by variational Bayesian learning.
//!
//! A complex rank-`r` matrix `X = [x_1 .. x_M]` is observed only through the
//! magnitudes `y_{p,m} = |a_{p,m}^H x_m + w_{p,m}|`. The [`vem`] module recovers it
//! with a variational EM loop over a Gaussian-Wishart hierarchical prior, treating
//! the missing measurement phases as deterministic parameters. [`baseline`] holds the
//! alternating-minimization comparison method, and [`experiment`] / [`report`] drive
//! Monte Carlo success-rate sweeps.

pub mod baseline;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod init;
pub mod linalg;
pub mod metrics;
pub mod report;
pub mod vem;

pub use datagen::{gen_lowrank, gen_measurements, MeasurementSet, SignalMatrix};
pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, HermitianPd, RMatrix, SeededRng, C64};
pub use metrics::{is_success, phase_aligned_sqerror, relative_error, TrialRecord};
pub use vem::{run_vem, Hyperparameters, VemOptions};
