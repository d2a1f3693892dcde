//! Neurally-supervised prediction of Neuroscore from images.
//!
//! The crate is organised bottom-up:
//!
//! * [`numkit`]: dense symmetric linear algebra, the regularized incomplete
//!   beta function and one-way ANOVA.
//! * [`signal`]: P300 source windows, single-trial amplitudes, Neuroscore and
//!   its error metric.
//! * [`synthgen`]: deterministic synthetic RSVP data (face-like stimuli paired
//!   with simulated P300 source signals).
//! * [`nn`]: the shallow dual-head convolutional regressor, its analytic
//!   gradients and the three training regimes, plus the auxiliary classifier.
//! * [`metrics`]: Inception Score, unbiased kernel MMD² and FID.
//! * [`harness`]: the shuffled-split experiment, reports, file formats.

pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod numkit;
pub mod rng;
pub mod signal;
pub mod synthgen;

pub use error::{Error, Result};
