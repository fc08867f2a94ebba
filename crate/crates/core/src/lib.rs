//! Identification and tracking of visually identical robots.
//!
//! The crate is organised around the data flow of the system:
//!
//! - [`types`], [`angle`], [`encode`] and [`dataset`] hold the shared domain
//!   model, the network input encoding and the on-disk sequence format.
//! - [`sim`] generates labelled sequences of noisy detections.
//! - [`net`] is the stacked LSTM association network with truncated BPTT
//!   training and streaming inference.
//! - [`baselines`] contains the Hungarian solver, the constant-acceleration
//!   Kalman filter and the Kalman-HA, Kalman-HA2 and JPDA associators.
//! - [`method`] is the per-frame interface shared by all associators.
//! - [`tracker`] smooths robot locations from network assignments.
//! - [`eval`] computes success rate and localization error and runs the
//!   benchmark, heading-swap and shuffled-order experiments.

pub mod angle;
pub mod baselines;
pub mod dataset;
pub mod encode;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod method;
pub mod net;
pub mod sim;
pub mod tracker;
pub mod types;

pub use error::{Error, Result};
pub use method::{Associator, FrameOutput};
pub use types::{AssignmentLabel, Detection, FrameInput, FrameRecord, RobotTruth, SequenceRecord};
