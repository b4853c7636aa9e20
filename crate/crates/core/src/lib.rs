//! Gaussian EPR steering under loss, noise and noiseless linear
//! amplification: covariance-matrix algebra, the ideal amplifier transform,
//! a Monte Carlo emulation of measurement-based amplification, cutoff
//! selection and a one-sided device-independent QKD key-rate bound.
//!
//! Quadratures follow `x = a + a†`, `p = -i(a - a†)`, so the vacuum has
//! unit variance. Covariance matrices are ordered `(x₁, p₁, x₂, p₂, …)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channels;
pub mod cutoff;
pub mod error;
pub mod gaussian;
pub mod measurement;
pub mod nla;
pub mod qkd;
pub mod steering;

pub use channels::{apply_lossy, apply_noisy, ChannelSpec, NoiseModel};
pub use error::{Error, Result};
pub use gaussian::{
    check_physical, db_to_variance, purity, schur_complement, symplectic_eigenvalues, tmss_pure, tmss_standard,
    CovMatrix, GaussianState, Partition, Party, PhysicalityReport,
};
pub use nla::{amplify, nla_cov_two_mode, nla_single_mode, GainPair};
pub use steering::{classify, steerability, steering_loss_threshold, Direction, Region, SteeringResult};
