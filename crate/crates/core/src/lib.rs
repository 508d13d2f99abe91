//! Joint detection, tracking and classification (JDTC) of a single
//! maneuvering target with a class/mode-augmented Bernoulli filter.
//!
//! The target is described by an existence probability `r`, a class PMF,
//! class-conditioned mode PMFs and class&mode-conditioned state densities,
//! each state density represented as a Gaussian mixture. Two multi-sensor
//! configurations are provided:
//!
//! * centralized: a fusion center applies every sensor's scan to a single
//!   density ([`filter::centralized_update`]);
//! * distributed: every node filters its own scan and then runs consensus
//!   iterations of generalized covariance intersection with its neighbors
//!   ([`fusion::consensus`]).
//!
//! [`sim`] drives both against a reproducible scenario and [`config`]
//! holds the experiment description read by the `jdtc` binary.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod density;
pub mod error;
pub mod filter;
pub mod fusion;
pub mod gaussian;
pub mod models;
pub mod reduce;
pub mod report;
pub mod sim;

pub use density::{AugmentedBernoulli, ClassId, ClassModePmf, GaussianComponent, GaussianMixture, ModeId, Violation};
pub use error::{Error, Result};
pub use filter::{Criterion, Estimate};
pub use models::{BirthModel, ClassLibrary, MotionKind, MotionMode, SensorId, SensorModel};
pub use reduce::ReductionPolicy;
