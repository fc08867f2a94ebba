use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Beta, Distribution, Poisson, StandardNormal};

use super::SimConfig;
use crate::angle::wrap;
use crate::types::{AssignmentLabel, Detection, FrameInput, RobotTruth};

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
    pub phi: f64,
    pub omega: f64,
    pub visible: bool,
    /// First frame at which the robot is visible again.
    pub occluded_until: u64,
    /// Last heading the observer received from this robot.
    pub broadcast: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub frame: u64,
    pub robots: Vec<RobotState>,
}

impl WorldState {
    /// Uniform random initial poses inside the field.
    pub fn random<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Self {
        let robots = (0..config.n_robots)
            .map(|_| {
                let x = rng.random::<f64>() * config.field_width;
                let y = rng.random::<f64>() * config.field_height;
                let speed = rng.random::<f64>() * config.v_max;
                let dir = rng.random::<f64>() * 2.0 * PI;
                let phi = wrap(rng.random::<f64>() * 2.0 * PI - PI);
                RobotState {
                    x,
                    y,
                    vx: speed * dir.cos(),
                    vy: speed * dir.sin(),
                    ax: 0.0,
                    ay: 0.0,
                    phi,
                    omega: 0.0,
                    visible: true,
                    occluded_until: 0,
                    broadcast: phi,
                }
            })
            .collect();
        WorldState { frame: 0, robots }
    }

    pub fn truth(&self) -> Vec<RobotTruth> {
        self.robots
            .iter()
            .map(|r| RobotTruth { x: r.x, y: r.y, phi: r.phi, visible: r.visible })
            .collect()
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn clamp_norm(x: &mut f64, y: &mut f64, max: f64) {
    let n = x.hypot(*y);
    if n > max {
        let s = if n > 0.0 { max / n } else { 0.0 };
        *x *= s;
        *y *= s;
    }
}

/// Reflects a coordinate (and its derivatives) back into `[0, limit]`.
fn reflect(p: &mut f64, v: &mut f64, a: &mut f64, limit: f64) {
    if *p < 0.0 {
        *p = -*p;
        *v = -*v;
        *a = -*a;
    } else if *p > limit {
        *p = 2.0 * limit - *p;
        *v = -*v;
        *a = -*a;
    }
    *p = p.clamp(0.0, limit);
}

/// Advances the world by one frame.
///
/// Accelerations and angular velocities follow bounded Ornstein–Uhlenbeck
/// processes; velocities and positions are Euler-integrated and reflected at
/// the field boundary. The number of random draws per robot is fixed, so a
/// seed fully determines the trajectory regardless of parameter values.
pub fn step_world<R: Rng + ?Sized>(state: &WorldState, config: &SimConfig, rng: &mut R) -> WorldState {
    let dt = config.dt();
    let frame = state.frame + 1;
    let rho_a = (-dt / config.accel_tau).exp();
    let kick_a = config.accel_sigma * (1.0 - rho_a * rho_a).sqrt();
    let rho_w = (-dt / config.omega_tau).exp();
    let kick_w = config.omega_sigma * (1.0 - rho_w * rho_w).sqrt();

    let robots = state
        .robots
        .iter()
        .map(|r| {
            let mut r = r.clone();
            let (na, nb, nw) = (normal(rng), normal(rng), normal(rng));
            r.ax = rho_a * r.ax + kick_a * na;
            r.ay = rho_a * r.ay + kick_a * nb;
            clamp_norm(&mut r.ax, &mut r.ay, config.a_max);
            r.vx += r.ax * dt;
            r.vy += r.ay * dt;
            clamp_norm(&mut r.vx, &mut r.vy, config.v_max);
            r.x += r.vx * dt;
            r.y += r.vy * dt;
            reflect(&mut r.x, &mut r.vx, &mut r.ax, config.field_width);
            reflect(&mut r.y, &mut r.vy, &mut r.ay, config.field_height);

            r.omega = (rho_w * r.omega + kick_w * nw).clamp(-config.omega_max, config.omega_max);
            r.phi = wrap(r.phi + r.omega * dt);

            let start_occlusion = rng.random::<f64>() < config.occlusion_rate;
            let duration = rng.random_range(config.occlusion_min_frames..=config.occlusion_max_frames);
            if frame >= r.occluded_until && start_occlusion {
                r.occluded_until = frame + u64::from(duration);
            }
            r.visible = frame >= r.occluded_until;

            if rng.random::<f64>() >= config.broadcast_dropout {
                r.broadcast = r.phi;
            }
            r
        })
        .collect();
    WorldState { frame, robots }
}

fn beta_sample<R: Rng + ?Sized>(p: super::BetaParams, rng: &mut R) -> f64 {
    let b = Beta::new(p.alpha, p.beta).expect("validated beta parameters");
    let g: f64 = b.sample(rng);
    g.clamp(1e-6, 1.0)
}

/// Produces the detector output for the current world state together with
/// the ground-truth slot labels.
///
/// Visible robots are detected with probability `1 - p_fn` with Gaussian
/// position and heading noise; Poisson clutter is added uniformly over the
/// field. If more than `M` detections result, the `M` most confident are
/// kept. Detections are then scattered over random slot indices.
pub fn observe<R: Rng + ?Sized>(
    state: &WorldState,
    config: &SimConfig,
    rng: &mut R,
) -> (FrameInput, AssignmentLabel) {
    let (w, h) = (config.field_width, config.field_height);
    // (detection, class)
    let mut found: Vec<(Detection, usize)> = Vec::with_capacity(config.max_detections + 2);

    for (i, r) in state.robots.iter().enumerate() {
        let miss = rng.random::<f64>() < config.p_fn;
        let (nx, ny, np) = (normal(rng), normal(rng), normal(rng));
        let gamma = beta_sample(config.gamma_true, rng);
        if !r.visible || miss {
            continue;
        }
        let x = (r.x + config.sigma_x * nx).clamp(0.0, w) / w;
        let y = (r.y + config.sigma_y * ny).clamp(0.0, h) / h;
        let phi = wrap(r.phi + config.sigma_phi * np);
        found.push((Detection { x, y, phi, gamma }, i + 1));
    }

    let clutter = if config.p_fp > 0.0 {
        let k: f64 = Poisson::new(config.p_fp).expect("validated rate").sample(rng);
        k as usize
    } else {
        0
    };
    for _ in 0..clutter {
        let x = rng.random::<f64>();
        let y = rng.random::<f64>();
        let phi = wrap(rng.random::<f64>() * 2.0 * PI - PI);
        let gamma = beta_sample(config.gamma_clutter, rng);
        found.push((Detection { x, y, phi, gamma }, 0));
    }

    if found.len() > config.max_detections {
        found.sort_by(|a, b| b.0.gamma.total_cmp(&a.0.gamma));
        found.truncate(config.max_detections);
    }

    let mut order: Vec<usize> = (0..config.max_detections).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }

    let mut slots = vec![Detection::EMPTY; config.max_detections];
    let mut classes = vec![0; config.max_detections];
    for ((det, class), &slot) in found.into_iter().zip(&order) {
        slots[slot] = det;
        classes[slot] = class;
    }

    let frame = FrameInput {
        t: state.frame,
        broadcasts: state.robots.iter().map(|r| r.broadcast).collect(),
        slots,
    };
    (frame, AssignmentLabel { classes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn still_robot(x: f64, y: f64, vx: f64, vy: f64) -> RobotState {
        RobotState {
            x,
            y,
            vx,
            vy,
            ax: 0.0,
            ay: 0.0,
            phi: 0.3,
            omega: 0.0,
            visible: true,
            occluded_until: 0,
            broadcast: 0.3,
        }
    }

    #[test]
    fn zero_motion_leaves_pose_unchanged() {
        let config = SimConfig { accel_sigma: 0.0, omega_sigma: 0.0, ..SimConfig::noiseless(1, 1) };
        let state = WorldState { frame: 0, robots: vec![still_robot(4.0, 3.0, 0.0, 0.0)] };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let next = step_world(&state, &config, &mut rng);
        let (a, b) = (&state.robots[0], &next.robots[0]);
        assert_eq!((a.x, a.y, a.phi), (b.x, b.y, b.phi));
        assert_eq!(next.frame, 1);
    }

    #[test]
    fn constant_velocity_advances_by_v_dt() {
        let config = SimConfig { accel_sigma: 0.0, omega_sigma: 0.0, ..SimConfig::noiseless(1, 1) };
        let state = WorldState { frame: 0, robots: vec![still_robot(4.0, 3.0, 0.3, -0.15)] };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let next = step_world(&state, &config, &mut rng);
        approx::assert_abs_diff_eq!(next.robots[0].x, 4.0 + 0.3 / 30.0, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(next.robots[0].y, 3.0 - 0.15 / 30.0, epsilon = 1e-12);
    }

    #[test]
    fn stays_in_field_at_full_speed() {
        let config = SimConfig {
            n_robots: 4,
            max_detections: 4,
            accel_sigma: 3.0,
            a_max: 5.0,
            v_max: 2.0,
            ..SimConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state = WorldState::random(&config, &mut rng);
        for r in &mut state.robots {
            r.vx = config.v_max;
        }
        for _ in 0..1000 {
            state = step_world(&state, &config, &mut rng);
            for r in &state.robots {
                assert!((0.0..=config.field_width).contains(&r.x));
                assert!((0.0..=config.field_height).contains(&r.y));
                assert!(r.vx.hypot(r.vy) <= config.v_max + 1e-12);
                assert!(r.omega.abs() <= config.omega_max);
                assert!((-PI..PI).contains(&r.phi));
            }
        }
    }

    #[test]
    fn all_missed_gives_empty_frame() {
        let config = SimConfig { p_fn: 1.0, p_fp: 0.0, ..SimConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let state = WorldState::random(&config, &mut rng);
        let (frame, label) = observe(&state, &config, &mut rng);
        assert!(frame.slots.iter().all(Detection::is_empty));
        assert!(label.classes.iter().all(|&c| c == 0));
    }

    #[test]
    fn noiseless_detections_match_truth() {
        let config = SimConfig::noiseless(3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let state = WorldState::random(&config, &mut rng);
        let (frame, label) = observe(&state, &config, &mut rng);
        let mut classes = label.classes.clone();
        classes.sort_unstable();
        assert_eq!(classes, vec![1, 2, 3]);
        for (d, &c) in frame.slots.iter().zip(&label.classes) {
            let r = &state.robots[c - 1];
            assert_eq!(d.x, r.x / config.field_width);
            assert_eq!(d.y, r.y / config.field_height);
            assert_eq!(d.phi, r.phi);
        }
    }

    #[test]
    fn heading_noise_matches_configuration() {
        let config = SimConfig { n_robots: 1, max_detections: 1, p_fn: 0.0, p_fp: 0.0, ..SimConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let state = WorldState::random(&config, &mut rng);
        let errs: Vec<f64> = (0..10_000)
            .map(|_| {
                let (f, _) = observe(&state, &config, &mut rng);
                crate::angle::diff(f.slots.iter().find(|d| !d.is_empty()).unwrap().phi, state.robots[0].phi)
            })
            .collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let std = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (errs.len() - 1) as f64).sqrt();
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((std - 0.30).abs() < 0.05 * 0.30, "std {std}");
    }

    #[test]
    fn position_noise_matches_configuration() {
        // Robot in the middle of a large field so clamping never triggers.
        let config = SimConfig {
            n_robots: 1,
            max_detections: 1,
            p_fn: 0.0,
            p_fp: 0.0,
            field_width: 100.0,
            field_height: 100.0,
            ..SimConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let state = WorldState { frame: 0, robots: vec![still_robot(50.0, 50.0, 0.0, 0.0)] };
        let mut ex = Vec::new();
        let mut ey = Vec::new();
        for _ in 0..10_000 {
            let (f, _) = observe(&state, &config, &mut rng);
            let d = f.slots[0];
            ex.push(d.x * 100.0 - 50.0);
            ey.push(d.y * 100.0 - 50.0);
        }
        for (e, sigma) in [(ex, config.sigma_x), (ey, config.sigma_y)] {
            let mean = e.iter().sum::<f64>() / e.len() as f64;
            let std = (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (e.len() - 1) as f64).sqrt();
            assert!(mean.abs() < 0.05 * sigma, "mean {mean}");
            assert!((std - sigma).abs() < 0.05 * sigma, "std {std} vs {sigma}");
        }
    }

    #[test]
    fn overflow_fills_every_slot_with_valid_labels() {
        let config = SimConfig { n_robots: 2, max_detections: 2, p_fp: 6.0, ..SimConfig::noiseless(2, 2) };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let state = WorldState::random(&config, &mut rng);
        for _ in 0..200 {
            let (f, l) = observe(&state, &config, &mut rng);
            l.validate(2, 2, true).unwrap();
            assert!(f.slots.iter().all(|d| !d.is_empty()));
        }
    }
}
