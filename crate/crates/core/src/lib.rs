//! Continuous-time recursive state estimation with cubic B-splines embedded in
//! the state-space model.
//!
//! The filter state is the window of the four most recent control points of a
//! uniform cubic B-spline. Measurements of any kinematic order (position,
//! ranges, accelerations) are fused at their exact timestamps, and the
//! posterior over the window yields position/velocity/acceleration estimates
//! with covariance at arbitrary times.
//!
//! Modules, bottom-up:
//! - [`spline`]: basis matrix, normalized time, kinematic interpolation and
//!   the vectorized coefficient matrices.
//! - [`tris`] and [`sensor`]: the state, transition matrix, process noise and
//!   sensing functions.
//! - [`filter`]: predict/update recursion, gating, posterior interpolation.
//! - [`simulation`]: ground truth and measurement synthesis.
//! - [`evaluation`]: metrics, CRLB, baseline EKF, Monte Carlo harness.
//! - [`io`]: stream/truth CSV formats and declarative configuration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod filter;
pub mod io;
pub mod linalg;
pub mod sensor;
pub mod simulation;
pub mod spline;
pub mod tris;

pub use error::{Error, Result};
pub use filter::{FilterConfig, InitConfig, RunOptions, Sere};
pub use sensor::{AnchorIds, MeasurementRecord, Modality, SensorModel, SensorSuite};
pub use spline::{KinematicOrder, KnotGrid};
pub use tris::{ProcessNoiseSpec, RcpState};
