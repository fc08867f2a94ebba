//! Constant-acceleration Kalman filter in normalized field coordinates.
//!
//! State `[x, y, vx, vy, ax, ay]`; only position is measured.

use nalgebra::{Matrix2, Matrix2x6, Matrix6, Vector2, Vector6};
use serde::{Deserialize, Serialize};

use crate::sim::SimConfig;
use crate::{Error, Result};

/// Filter noise parameters. Spectral densities are per normalized axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanNoise {
    /// White-noise jerk spectral density along x and y.
    pub jerk_psd: [f64; 2],
    /// Measurement variance along x and y.
    pub meas_var: [f64; 2],
    /// Initial velocity and acceleration variance along x and y.
    pub init_vel_var: [f64; 2],
    pub init_acc_var: [f64; 2],
}

/// Filter tuning in metric units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanConfig {
    /// Jerk spectral density, m²/s⁵.
    pub jerk_psd: f64,
    /// Initial velocity std dev, m/s.
    pub init_vel_std: f64,
    /// Initial acceleration std dev, m/s².
    pub init_acc_std: f64,
    /// Floor on measurement std dev, m, so a noiseless simulator still
    /// yields a non-singular filter.
    pub min_meas_std: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig { jerk_psd: 0.3, init_vel_std: 0.5, init_acc_std: 1.0, min_meas_std: 0.01 }
    }
}

impl KalmanConfig {
    /// Converts to normalized units for a field, taking the measurement
    /// noise from the simulator.
    pub fn noise(&self, sim: &SimConfig) -> KalmanNoise {
        let (w, h) = (sim.field_width, sim.field_height);
        let scale = [w * w, h * h];
        let meas = [sim.sigma_x.max(self.min_meas_std), sim.sigma_y.max(self.min_meas_std)];
        KalmanNoise {
            jerk_psd: [self.jerk_psd / scale[0], self.jerk_psd / scale[1]],
            meas_var: [meas[0] * meas[0] / scale[0], meas[1] * meas[1] / scale[1]],
            init_vel_var: [self.init_vel_std.powi(2) / scale[0], self.init_vel_std.powi(2) / scale[1]],
            init_acc_var: [self.init_acc_std.powi(2) / scale[0], self.init_acc_std.powi(2) / scale[1]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("jerk_psd", self.jerk_psd),
            ("init_vel_std", self.init_vel_std),
            ("init_acc_std", self.init_acc_std),
            ("min_meas_std", self.min_meas_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("kalman {name} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrack {
    pub state: Vector6<f64>,
    pub cov: Matrix6<f64>,
    /// Heading of the last associated detection, radians.
    pub phi: f64,
    /// Frames since creation.
    pub age: u32,
    /// Consecutive frames with an associated detection.
    pub hits: u32,
    /// Consecutive frames without one.
    pub misses: u32,
    pub confirmed: bool,
}

const H: Matrix2x6<f64> = Matrix2x6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);

pub fn measurement_cov(noise: &KalmanNoise) -> Matrix2<f64> {
    Matrix2::new(noise.meas_var[0], 0.0, 0.0, noise.meas_var[1])
}

/// Transition matrix for one step of `dt`.
pub fn transition(dt: f64) -> Matrix6<f64> {
    let mut f = Matrix6::identity();
    for a in 0..2 {
        f[(a, a + 2)] = dt;
        f[(a, a + 4)] = 0.5 * dt * dt;
        f[(a + 2, a + 4)] = dt;
    }
    f
}

/// Discretized white-noise-jerk process covariance.
pub fn process_cov(dt: f64, jerk_psd: [f64; 2]) -> Matrix6<f64> {
    let (d2, d3, d4, d5) = (dt * dt, dt.powi(3), dt.powi(4), dt.powi(5));
    let block = [[d5 / 20.0, d4 / 8.0, d3 / 6.0], [d4 / 8.0, d3 / 3.0, d2 / 2.0], [d3 / 6.0, d2 / 2.0, dt]];
    let mut q = Matrix6::zeros();
    for (a, &s) in jerk_psd.iter().enumerate() {
        for i in 0..3 {
            for j in 0..3 {
                q[(a + 2 * i, a + 2 * j)] = s * block[i][j];
            }
        }
    }
    q
}

fn symmetrize(p: &mut Matrix6<f64>) {
    *p = (*p + p.transpose()) * 0.5;
}

impl KalmanTrack {
    /// New track at a measured position with zero velocity and acceleration.
    pub fn spawn(x: f64, y: f64, phi: f64, noise: &KalmanNoise) -> Self {
        let mut cov = Matrix6::zeros();
        let diag = [
            noise.meas_var[0],
            noise.meas_var[1],
            noise.init_vel_var[0],
            noise.init_vel_var[1],
            noise.init_acc_var[0],
            noise.init_acc_var[1],
        ];
        for (i, d) in diag.into_iter().enumerate() {
            cov[(i, i)] = d;
        }
        KalmanTrack {
            state: Vector6::new(x, y, 0.0, 0.0, 0.0, 0.0),
            cov,
            phi,
            age: 0,
            hits: 1,
            misses: 0,
            confirmed: false,
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.state[0], self.state[1])
    }

    pub fn predict(&mut self, dt: f64, noise: &KalmanNoise) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("kalman predict needs dt > 0, got {dt}")));
        }
        let f = transition(dt);
        self.state = f * self.state;
        self.cov = f * self.cov * f.transpose() + process_cov(dt, noise.jerk_psd);
        symmetrize(&mut self.cov);
        self.age += 1;
        Ok(())
    }

    /// Predicted measurement and innovation covariance.
    pub fn innovation_cov(&self, r: &Matrix2<f64>) -> Matrix2<f64> {
        H * self.cov * H.transpose() + r
    }

    /// Squared Mahalanobis distance of a measurement from the prediction.
    pub fn mahalanobis_sq(&self, z: (f64, f64), r: &Matrix2<f64>) -> Result<f64> {
        let s = self.innovation_cov(r);
        let inv = s.try_inverse().ok_or(Error::SingularCovariance)?;
        let nu = Vector2::new(z.0 - self.state[0], z.1 - self.state[1]);
        Ok((nu.transpose() * inv * nu)[0])
    }

    /// Gaussian likelihood of a measurement under the predicted position.
    pub fn likelihood(&self, z: (f64, f64), r: &Matrix2<f64>) -> Result<f64> {
        let s = self.innovation_cov(r);
        let det = s.determinant();
        if !(det > 0.0) {
            return Err(Error::SingularCovariance);
        }
        let d2 = self.mahalanobis_sq(z, r)?;
        Ok((-0.5 * d2).exp() / (2.0 * std::f64::consts::PI * det.sqrt()))
    }

    fn gain(&self, r: &Matrix2<f64>) -> Result<nalgebra::Matrix6x2<f64>> {
        let s = self.innovation_cov(r);
        let inv = s.try_inverse().ok_or(Error::SingularCovariance)?;
        Ok(self.cov * H.transpose() * inv)
    }

    /// Standard update with a position measurement, Joseph form.
    pub fn update(&mut self, z: (f64, f64), r: &Matrix2<f64>) -> Result<()> {
        let k = self.gain(r)?;
        let nu = Vector2::new(z.0 - self.state[0], z.1 - self.state[1]);
        self.state += k * nu;
        let ikh = Matrix6::identity() - k * H;
        self.cov = ikh * self.cov * ikh.transpose() + k * r * k.transpose();
        symmetrize(&mut self.cov);
        Ok(())
    }

    /// Probabilistic data association update: `weights[i]` is the
    /// probability that `measurements[i]` originated from this track, and
    /// the remaining mass `1 - Σ weights` is the probability of no detection.
    pub fn pda_update(&mut self, measurements: &[(f64, f64)], weights: &[f64], r: &Matrix2<f64>) -> Result<()> {
        if measurements.len() != weights.len() {
            return Err(Error::LengthMismatch("pda measurements and weights".into()));
        }
        let k = self.gain(r)?;
        let beta_sum: f64 = weights.iter().sum();
        let beta0 = (1.0 - beta_sum).clamp(0.0, 1.0);
        let mut nu = Vector2::zeros();
        let mut spread = Matrix2::zeros();
        for (z, &b) in measurements.iter().zip(weights) {
            let v = Vector2::new(z.0 - self.state[0], z.1 - self.state[1]);
            nu += v * b;
            spread += v * v.transpose() * b;
        }
        spread -= nu * nu.transpose();
        self.state += k * nu;
        let ikh = Matrix6::identity() - k * H;
        let updated = ikh * self.cov * ikh.transpose() + k * r * k.transpose();
        self.cov = self.cov * beta0 + updated * (1.0 - beta0) + k * spread * k.transpose();
        symmetrize(&mut self.cov);
        Ok(())
    }

    /// Symmetric with positive eigenvalues.
    pub fn covariance_valid(&self) -> bool {
        let p = &self.cov;
        (p - p.transpose()).abs().max() <= 1e-12 * p.abs().max().max(1.0)
            && p.symmetric_eigenvalues().iter().all(|&e| e > 0.0)
    }
}
