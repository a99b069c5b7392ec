//! Identification and control of hybrid dynamical systems from data.
//!
//! The pipeline windows a trajectory, fits a local Koopman operator to each
//! window, clusters the operators into dynamically distinct modes, trains a
//! classifier that maps states to modes (a learned guard condition), fits one
//! operator per mode, and drives a sampling-based model predictive controller
//! over the resulting switched linear model. A built-in spring-loaded
//! inverted pendulum hopper and gait-log tooling provide end-to-end
//! validation.

pub mod clustering;
pub mod error;
pub mod gait;
pub mod indicator;
pub mod lifting;
pub mod mpc;
pub mod ncd;
pub mod slip;
pub mod slip_learn;
pub mod trajectory;

pub use error::{Error, Result};
