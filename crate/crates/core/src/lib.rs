//! Simulation and analysis of a qubit under simultaneous continuous weak
//! measurement of two non-commuting observables.
//!
//! Four backends compute quantum-state trajectories and their temporal
//! correlators, and cross-check each other:
//!
//! * [`sde`]: Euler-Maruyama integration of the Itô stochastic master
//!   equation (plus an exact polar fast path for the ideal XZ case) and
//!   counter-based Monte Carlo ensembles.
//! * [`analytic`]: closed-form pre-/post-selected averages for the ideal,
//!   equal-strength XZ measurement from the Gaussian path integral.
//! * [`fpe`]: heat kernel on the circle, two-sided (bridge) densities and
//!   Fourier-series conditional averages.
//! * [`perturb`]: tree-level covariances for inefficient XZ measurement and
//!   the decoherence-matrix eigenvalues for a general axis angle.
//!
//! [`bayes`] reconstructs trajectories from readout records by discrete
//! quantum Bayesian updates, and [`estimator`] turns ensembles into
//! correlator, covariance and variance estimates with standard errors.
//! [`campaign`] drives all of it from a TOML file; it backs the `qmeas`
//! binary.

// `!(x > 0.0)` checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod bayes;
pub mod campaign;
pub mod error;
pub mod estimator;
pub mod fpe;
pub mod perturb;
pub mod rng;
pub mod sde;
pub mod state;

pub use error::{Error, Result};
pub use state::{
    bloch_norm, measurement_time, polar_to_bloch, BlochState, ChannelConfig, Coord, Kind,
    PolarState, QubitEnvironment, SimConfig,
};
