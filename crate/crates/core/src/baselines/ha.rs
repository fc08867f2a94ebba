//! Kalman filters with Hungarian assignment: Kalman-HA, which starts and
//! ends tracks as soon as a detection appears or is missed, and Kalman-HA2,
//! which adds confirmation, coasting and tighter gating.

use nalgebra::Matrix2;

use super::config::BaselineConfig;
use super::hungarian::{hungarian, CostMatrix, FORBIDDEN};
use super::kalman::{measurement_cov, KalmanNoise, KalmanTrack};
use crate::angle::diff;
use crate::method::{Associator, FrameOutput};
use crate::sim::SimConfig;
use crate::types::{AssignmentLabel, Detection, FrameInput};
use crate::Result;

/// State shared by both variants: one track slot per robot identity.
#[derive(Debug, Clone)]
struct Tracks {
    config: BaselineConfig,
    n: usize,
    m: usize,
    dt: f64,
    noise: KalmanNoise,
    r: Matrix2<f64>,
    tracks: Vec<Option<KalmanTrack>>,
}

impl Tracks {
    fn new(config: BaselineConfig, sim: &SimConfig) -> Result<Self> {
        config.validate()?;
        sim.validate()?;
        let noise = config.kalman.noise(sim);
        Ok(Tracks {
            n: sim.n_robots,
            m: sim.max_detections,
            dt: sim.dt(),
            r: measurement_cov(&noise),
            noise,
            tracks: vec![None; sim.n_robots],
            config,
        })
    }

    fn predict(&mut self) -> Result<()> {
        for t in self.tracks.iter_mut().flatten() {
            t.predict(self.dt, &self.noise)?;
        }
        Ok(())
    }

    /// Hungarian over robots × occupied detections. Returns, per robot, the
    /// matched `(slot, detection)`.
    fn associate(&self, frame: &FrameInput, gate: f64) -> Result<Vec<Option<(usize, Detection)>>> {
        let dets: Vec<(usize, Detection)> = frame.occupied().map(|s| (s, frame.slots[s])).collect();
        let c = &self.config;
        let mut data = Vec::with_capacity(self.n * dets.len());
        for (r, track) in self.tracks.iter().enumerate() {
            for (_, d) in &dets {
                let heading = c.w_heading * diff(frame.broadcasts[r], d.phi).abs();
                let cost = match track {
                    Some(t) => {
                        let d2 = t.mahalanobis_sq((d.x, d.y), &self.r)?;
                        if d2 > gate {
                            FORBIDDEN
                        } else {
                            c.w_position * d2.sqrt() + heading
                        }
                    }
                    None => c.new_track_cost + heading,
                };
                data.push(cost);
            }
        }
        let cost = CostMatrix::new(self.n, dets.len(), data)?;
        let a = hungarian(&cost);
        Ok(a.row_to_col
            .iter()
            .enumerate()
            .map(|(r, col)| col.filter(|&d| cost.get(r, d) < FORBIDDEN).map(|d| dets[d]))
            .collect())
    }

    fn label(&self, matches: &[Option<(usize, Detection)>], emits: impl Fn(&KalmanTrack) -> bool) -> AssignmentLabel {
        let mut label = AssignmentLabel::empty(self.m);
        for (r, m) in matches.iter().enumerate() {
            if let (Some((slot, _)), Some(t)) = (m, &self.tracks[r]) {
                if emits(t) {
                    label.classes[*slot] = r + 1;
                }
            }
        }
        label
    }
}

/// Kalman-HA.
#[derive(Debug, Clone)]
pub struct KalmanHa {
    inner: Tracks,
}

impl KalmanHa {
    pub fn new(config: BaselineConfig, sim: &SimConfig) -> Result<Self> {
        Ok(KalmanHa { inner: Tracks::new(config, sim)? })
    }

    pub fn tracks(&self) -> &[Option<KalmanTrack>] {
        &self.inner.tracks
    }
}

impl Associator for KalmanHa {
    fn name(&self) -> &str {
        "kalman-ha"
    }

    fn reset(&mut self) {
        self.inner.tracks.iter_mut().for_each(|t| *t = None);
    }

    fn step(&mut self, frame: &FrameInput) -> Result<FrameOutput> {
        let s = &mut self.inner;
        frame.validate(s.n, s.m)?;
        s.predict()?;
        let matches = s.associate(frame, s.config.ha_gate)?;
        for (track, m) in s.tracks.iter_mut().zip(&matches) {
            *track = match (track.take(), m) {
                (Some(mut t), Some((_, d))) => {
                    t.update((d.x, d.y), &s.r)?;
                    t.phi = d.phi;
                    t.hits += 1;
                    Some(t)
                }
                (None, Some((_, d))) => Some(KalmanTrack::spawn(d.x, d.y, d.phi, &s.noise)),
                (_, None) => None,
            };
        }
        let label = s.label(&matches, |_| true);
        let positions = s.tracks.iter().map(|t| t.as_ref().map(KalmanTrack::position)).collect();
        Ok(FrameOutput { label, positions })
    }
}

/// Kalman-HA2.
#[derive(Debug, Clone)]
pub struct KalmanHa2 {
    inner: Tracks,
}

impl KalmanHa2 {
    pub fn new(config: BaselineConfig, sim: &SimConfig) -> Result<Self> {
        Ok(KalmanHa2 { inner: Tracks::new(config, sim)? })
    }

    pub fn tracks(&self) -> &[Option<KalmanTrack>] {
        &self.inner.tracks
    }
}

impl Associator for KalmanHa2 {
    fn name(&self) -> &str {
        "kalman-ha2"
    }

    fn reset(&mut self) {
        self.inner.tracks.iter_mut().for_each(|t| *t = None);
    }

    fn step(&mut self, frame: &FrameInput) -> Result<FrameOutput> {
        let s = &mut self.inner;
        frame.validate(s.n, s.m)?;
        s.predict()?;
        let matches = s.associate(frame, s.config.ha2_gate)?;
        let (confirm, max_misses) = (s.config.confirm_hits, s.config.max_misses);
        for (track, m) in s.tracks.iter_mut().zip(&matches) {
            *track = match (track.take(), m) {
                (Some(mut t), Some((_, d))) => {
                    t.update((d.x, d.y), &s.r)?;
                    t.phi = d.phi;
                    t.hits += 1;
                    t.misses = 0;
                    t.confirmed |= t.hits >= confirm;
                    Some(t)
                }
                (None, Some((_, d))) => {
                    let mut t = KalmanTrack::spawn(d.x, d.y, d.phi, &s.noise);
                    t.confirmed = confirm <= 1;
                    Some(t)
                }
                // Tentative tracks die on their first miss.
                (Some(t), None) if !t.confirmed => None,
                (Some(mut t), None) => {
                    t.hits = 0;
                    t.misses += 1;
                    (t.misses <= max_misses).then_some(t)
                }
                (None, None) => None,
            };
        }
        let label = s.label(&matches, |t| t.confirmed);
        let positions = s
            .tracks
            .iter()
            .map(|t| t.as_ref().filter(|t| t.confirmed).map(KalmanTrack::position))
            .collect();
        Ok(FrameOutput { label, positions })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_sequence, SimConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn det(x: f64, y: f64, phi: f64) -> Detection {
        Detection { x, y, phi, gamma: 0.9 }
    }

    fn frame(t: u64, broadcasts: &[f64], slots: &[Detection]) -> FrameInput {
        FrameInput { t, broadcasts: broadcasts.to_vec(), slots: slots.to_vec() }
    }

    #[test]
    fn noise_free_separated_robots_are_labelled_perfectly() {
        let sim = SimConfig { occlusion_rate: 0.0, ..SimConfig::noiseless(2, 3) };
        let seq = generate_sequence(&sim, 300, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut ha = KalmanHa::new(BaselineConfig::default(), &sim).unwrap();
        let mut ha2 = KalmanHa2::new(BaselineConfig::default(), &sim).unwrap();
        for (i, f) in seq.frames.iter().enumerate() {
            assert_eq!(ha.step(&f.input).unwrap().label, f.label, "frame {i}");
            let out2 = ha2.step(&f.input).unwrap();
            if i >= 2 {
                assert_eq!(out2.label, f.label, "frame {i}");
            }
        }
    }

    #[test]
    fn far_false_positive_gated_to_clutter() {
        let sim = SimConfig::default();
        let mut ha = KalmanHa::new(BaselineConfig::default(), &sim).unwrap();
        let b = [0.0, 2.0];
        let robots = [det(0.2, 0.2, 0.0), det(0.8, 0.8, 2.0)];
        for t in 0..20 {
            let out = ha.step(&frame(t, &b, &[robots[0], robots[1], Detection::EMPTY])).unwrap();
            assert_eq!(out.label.classes, vec![1, 2, 0]);
        }
        // Robot 2 vanishes and clutter with its heading shows up far away.
        let out = ha.step(&frame(20, &b, &[robots[0], Detection::EMPTY, det(0.2, 0.9, 2.0)])).unwrap();
        assert_eq!(out.label.classes, vec![1, 0, 0]);
        assert!(ha.tracks()[1].is_none());
    }

    #[test]
    fn flicker_kept_by_ha2_lost_by_ha() {
        let sim = SimConfig::default();
        let mut ha = KalmanHa::new(BaselineConfig::default(), &sim).unwrap();
        let mut ha2 = KalmanHa2::new(BaselineConfig::default(), &sim).unwrap();
        let b = [0.0, 2.0];
        let robots = [det(0.2, 0.2, 0.0), det(0.8, 0.8, 2.0)];
        let full = frame(0, &b, &[robots[0], robots[1], Detection::EMPTY]);
        let partial = frame(0, &b, &[robots[0], Detection::EMPTY, Detection::EMPTY]);
        for _ in 0..10 {
            ha.step(&full).unwrap();
            ha2.step(&full).unwrap();
        }
        for _ in 0..5 {
            ha.step(&partial).unwrap();
            let out = ha2.step(&partial).unwrap();
            assert!(out.positions[1].is_some());
        }
        assert!(ha.tracks()[1].is_none());
        let kept = ha2.tracks()[1].as_ref().unwrap();
        assert!(kept.confirmed && kept.misses == 5);
        assert_eq!(ha2.step(&full).unwrap().label.classes, vec![1, 2, 0]);
    }

    #[test]
    fn single_frame_clutter_never_confirmed() {
        let sim = SimConfig { n_robots: 1, max_detections: 2, ..SimConfig::default() };
        let mut ha2 = KalmanHa2::new(BaselineConfig::default(), &sim).unwrap();
        let out = ha2.step(&frame(0, &[1.0], &[det(0.5, 0.5, 1.0), Detection::EMPTY])).unwrap();
        assert_eq!(out.label.classes, vec![0, 0]);
        assert_eq!(out.positions, vec![None]);
        let out = ha2.step(&frame(1, &[1.0], &[Detection::EMPTY; 2])).unwrap();
        assert_eq!(out.label.classes, vec![0, 0]);
        assert!(ha2.tracks()[0].is_none());
    }

    #[test]
    fn coasting_track_deleted_after_max_misses() {
        let sim = SimConfig { n_robots: 1, max_detections: 1, ..SimConfig::default() };
        let cfg = BaselineConfig { max_misses: 4, ..BaselineConfig::default() };
        let mut ha2 = KalmanHa2::new(cfg, &sim).unwrap();
        for t in 0..5 {
            ha2.step(&frame(t, &[0.0], &[det(0.5, 0.5, 0.0)])).unwrap();
        }
        for t in 0..4 {
            ha2.step(&frame(5 + t, &[0.0], &[Detection::EMPTY])).unwrap();
            assert!(ha2.tracks()[0].is_some());
        }
        ha2.step(&frame(9, &[0.0], &[Detection::EMPTY])).unwrap();
        assert!(ha2.tracks()[0].is_none());
    }

    #[test]
    fn deterministic_and_resettable() {
        let sim = SimConfig::default();
        let seq = generate_sequence(&sim, 200, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut ha2 = KalmanHa2::new(BaselineConfig::default(), &sim).unwrap();
        let first: Vec<_> = seq.inputs().map(|f| ha2.step(f).unwrap()).collect();
        ha2.reset();
        let second: Vec<_> = seq.inputs().map(|f| ha2.step(f).unwrap()).collect();
        assert_eq!(first, second);
        for t in ha2.tracks().iter().flatten() {
            assert!(t.covariance_valid());
        }
    }
}
