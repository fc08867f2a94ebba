use serde::{Deserialize, Serialize};

use super::kalman::KalmanConfig;
use crate::{Error, Result};

/// Tuning shared by the classical baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub kalman: KalmanConfig,
    /// Weight of the Mahalanobis position distance in association costs.
    pub w_position: f64,
    /// Weight of `|broadcast − detected heading|` (radians).
    pub w_heading: f64,
    /// Position cost of giving a detection to a robot with no track.
    pub new_track_cost: f64,
    /// Squared-Mahalanobis gate of Kalman-HA.
    pub ha_gate: f64,
    /// Consecutive hits before a Kalman-HA2 track emits an identity.
    pub confirm_hits: u32,
    /// Consecutive misses a Kalman-HA2 or JPDA track may coast through.
    pub max_misses: u32,
    /// Squared-Mahalanobis gate of Kalman-HA2 (χ² 95%, 2 dof).
    pub ha2_gate: f64,
    /// Squared-Mahalanobis gate of JPDA.
    pub jpda_gate: f64,
    /// Std dev of broadcast vs detected heading in the JPDA likelihood;
    /// `None` takes the simulator's heading noise.
    pub heading_sigma: Option<f64>,
    /// Prior weight of an untracked robot claiming a detection in JPDA,
    /// relative to the uniform spatial density.
    pub birth_weight: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            kalman: KalmanConfig::default(),
            w_position: 1.0,
            w_heading: 0.5,
            new_track_cost: 3.0,
            ha_gate: 25.0,
            confirm_hits: 3,
            max_misses: 15,
            ha2_gate: 5.991,
            jpda_gate: 16.0,
            heading_sigma: None,
            birth_weight: 1.0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        self.kalman.validate()?;
        for (name, v) in [
            ("w_position", self.w_position),
            ("w_heading", self.w_heading),
            ("new_track_cost", self.new_track_cost),
            ("birth_weight", self.birth_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        for (name, v) in [("ha_gate", self.ha_gate), ("ha2_gate", self.ha2_gate), ("jpda_gate", self.jpda_gate)] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.confirm_hits == 0 {
            return Err(Error::Config("confirm_hits must be at least 1".into()));
        }
        if let Some(s) = self.heading_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config("heading_sigma must be positive".into()));
            }
        }
        Ok(())
    }
}
