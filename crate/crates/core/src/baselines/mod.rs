//! Classical association baselines.

mod config;
mod ha;
mod hungarian;
mod jpda;
mod kalman;

pub use config::BaselineConfig;
pub use ha::{KalmanHa, KalmanHa2};
pub use hungarian::{hungarian, Assignment, CostMatrix, FORBIDDEN};
pub use jpda::{jpda_labels, jpda_marginals, Jpda, JpdaStep, Marginals, MAX_DETECTIONS, MAX_TRACKS};
pub use kalman::{measurement_cov, process_cov, transition, KalmanConfig, KalmanNoise, KalmanTrack};
