use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shape parameters of a Beta distribution used for detector confidences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

/// Simulator configuration. Distances are in metres, times in seconds,
/// angles in radians unless a field says otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Number of robots `N`.
    pub n_robots: usize,
    /// Number of detection slots `M` (≥ N).
    pub max_detections: usize,
    pub field_width: f64,
    pub field_height: f64,
    pub frame_rate: f64,

    /// Detection position noise along the field's x axis.
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Visual heading estimation noise.
    pub sigma_phi: f64,
    /// Probability that a visible robot is not detected in a frame.
    pub p_fn: f64,
    /// Expected number of clutter detections per frame (Poisson mean).
    pub p_fp: f64,
    /// Per-robot, per-frame probability that an occlusion starts.
    pub occlusion_rate: f64,
    pub occlusion_min_frames: u32,
    pub occlusion_max_frames: u32,
    /// Probability that a robot's heading broadcast is lost in a frame; the
    /// receiver then holds the last value.
    pub broadcast_dropout: f64,

    pub v_max: f64,
    pub a_max: f64,
    /// Stationary std dev of the Ornstein–Uhlenbeck acceleration process.
    pub accel_sigma: f64,
    pub accel_tau: f64,
    pub omega_max: f64,
    /// Stationary std dev of the Ornstein–Uhlenbeck angular velocity.
    pub omega_sigma: f64,
    pub omega_tau: f64,

    pub gamma_true: BetaParams,
    pub gamma_clutter: BetaParams,

    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_robots: 2,
            max_detections: 3,
            field_width: 9.0,
            field_height: 6.0,
            frame_rate: 30.0,
            sigma_x: 0.30,
            sigma_y: 0.15,
            sigma_phi: 0.30,
            p_fn: 0.1,
            p_fp: 0.3,
            occlusion_rate: 0.002,
            occlusion_min_frames: 15,
            occlusion_max_frames: 300,
            broadcast_dropout: 0.05,
            v_max: 0.5,
            a_max: 1.0,
            accel_sigma: 0.4,
            accel_tau: 1.0,
            omega_max: 1.5,
            omega_sigma: 0.8,
            omega_tau: 1.0,
            gamma_true: BetaParams { alpha: 5.0, beta: 2.0 },
            gamma_clutter: BetaParams { alpha: 2.0, beta: 3.0 },
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    pub fn field_area(&self) -> f64 {
        self.field_width * self.field_height
    }

    /// Configuration with every noise source and random event switched off.
    pub fn noiseless(n_robots: usize, max_detections: usize) -> Self {
        SimConfig {
            n_robots,
            max_detections,
            sigma_x: 0.0,
            sigma_y: 0.0,
            sigma_phi: 0.0,
            p_fn: 0.0,
            p_fp: 0.0,
            occlusion_rate: 0.0,
            broadcast_dropout: 0.0,
            ..SimConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_robots == 0 {
            return fail("n_robots must be at least 1".into());
        }
        if self.max_detections < self.n_robots {
            return fail(format!(
                "max_detections ({}) must be >= n_robots ({})",
                self.max_detections, self.n_robots
            ));
        }
        for (name, p) in [
            ("p_fn", self.p_fn),
            ("occlusion_rate", self.occlusion_rate),
            ("broadcast_dropout", self.broadcast_dropout),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} = {p} is not a probability"));
            }
        }
        if !(self.p_fp >= 0.0 && self.p_fp.is_finite()) {
            return fail(format!("p_fp = {} must be a finite non-negative rate", self.p_fp));
        }
        if !(self.sigma_y >= 0.0 && self.sigma_x >= self.sigma_y && self.sigma_phi >= 0.0) {
            return fail(format!(
                "noise must satisfy sigma_x >= sigma_y >= 0 and sigma_phi >= 0 (got {}, {}, {})",
                self.sigma_x, self.sigma_y, self.sigma_phi
            ));
        }
        for (name, v) in [
            ("field_width", self.field_width),
            ("field_height", self.field_height),
            ("frame_rate", self.frame_rate),
            ("accel_tau", self.accel_tau),
            ("omega_tau", self.omega_tau),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive"));
            }
        }
        for (name, v) in [
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("accel_sigma", self.accel_sigma),
            ("omega_max", self.omega_max),
            ("omega_sigma", self.omega_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be non-negative"));
            }
        }
        if self.occlusion_min_frames > self.occlusion_max_frames {
            return fail("occlusion_min_frames exceeds occlusion_max_frames".into());
        }
        for (name, b) in [("gamma_true", self.gamma_true), ("gamma_clutter", self.gamma_clutter)] {
            if !(b.alpha > 0.0 && b.beta > 0.0) {
                return fail(format!("{name} shape parameters must be positive"));
            }
        }
        Ok(())
    }
}
