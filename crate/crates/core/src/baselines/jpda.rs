//! Exact joint probabilistic data association.
//!
//! One track per robot identity. A joint event gives every detection to
//! clutter or to at most one gated track. Its weight is the product of the
//! assigned pairs' likelihoods (detection probability × position
//! innovation density × broadcast heading agreement), the clutter density
//! of unassigned detections and the miss probability of unassigned tracks.
//! All events are enumerated; no m-best approximation.

use std::f64::consts::PI;

use nalgebra::Matrix2;

use super::config::BaselineConfig;
use super::hungarian::{hungarian, CostMatrix, FORBIDDEN};
use super::kalman::{measurement_cov, KalmanNoise, KalmanTrack};
use crate::angle::diff;
use crate::method::{Associator, FrameOutput};
use crate::sim::SimConfig;
use crate::types::{AssignmentLabel, FrameInput};
use crate::{Error, Result};

/// Largest robot count accepted for exact enumeration.
pub const MAX_TRACKS: usize = 7;
/// Largest detection count accepted for exact enumeration.
pub const MAX_DETECTIONS: usize = 10;

/// Marginal association probabilities for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub tracks: usize,
    pub detections: usize,
    /// `β[r][d]`, row-major `tracks × detections`.
    pub beta: Vec<f64>,
    /// Probability that detection `d` is clutter.
    pub clutter: Vec<f64>,
    /// Probability that track `r` has no detection.
    pub miss: Vec<f64>,
    /// Every event had zero weight; probabilities are the uniform fallback.
    pub degenerate: bool,
}

impl Marginals {
    pub fn beta(&self, r: usize, d: usize) -> f64 {
        self.beta[r * self.detections + d]
    }
}

/// Exact marginals by depth-first enumeration of joint events.
///
/// `pair[r·D + d]` is the weight of track `r` producing detection `d`
/// (zero when gated out), `miss[r]` the weight of track `r` going
/// undetected and `clutter[d]` the weight of detection `d` being clutter.
pub fn jpda_marginals(pair: &[f64], miss: &[f64], clutter: &[f64]) -> Result<Marginals> {
    let (n, d) = (miss.len(), clutter.len());
    if pair.len() != n * d {
        return Err(Error::Shape(format!("pair weights have {} entries for {n}×{d}", pair.len())));
    }
    if n > MAX_TRACKS || d > MAX_DETECTIONS {
        return Err(Error::Config(format!("exact JPDA limited to {MAX_TRACKS} tracks and {MAX_DETECTIONS} detections")));
    }
    if pair.iter().chain(miss).chain(clutter).any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(Error::NonFinite("jpda weight"));
    }

    struct Walk<'a> {
        n: usize,
        d: usize,
        pair: &'a [f64],
        miss: &'a [f64],
        clutter: &'a [f64],
        choice: Vec<usize>,
        total: f64,
        beta: Vec<f64>,
        fp: Vec<f64>,
        missed: Vec<f64>,
    }

    impl Walk<'_> {
        fn visit(&mut self, det: usize, used: u32, weight: f64) {
            if weight == 0.0 {
                return;
            }
            if det == self.d {
                let mut w = weight;
                for r in 0..self.n {
                    if used & (1 << r) == 0 {
                        w *= self.miss[r];
                    }
                }
                if w == 0.0 {
                    return;
                }
                self.total += w;
                for (k, &c) in self.choice.iter().enumerate() {
                    if c == self.n {
                        self.fp[k] += w;
                    } else {
                        self.beta[c * self.d + k] += w;
                    }
                }
                for r in 0..self.n {
                    if used & (1 << r) == 0 {
                        self.missed[r] += w;
                    }
                }
                return;
            }
            self.choice[det] = self.n;
            self.visit(det + 1, used, weight * self.clutter[det]);
            for r in 0..self.n {
                let p = self.pair[r * self.d + det];
                if used & (1 << r) == 0 && p > 0.0 {
                    self.choice[det] = r;
                    self.visit(det + 1, used | (1 << r), weight * p);
                }
            }
        }
    }

    let mut walk = Walk {
        n,
        d,
        pair,
        miss,
        clutter,
        choice: vec![0; d],
        total: 0.0,
        beta: vec![0.0; n * d],
        fp: vec![0.0; d],
        missed: vec![0.0; n],
    };
    walk.visit(0, 0, 1.0);

    if walk.total > 0.0 && walk.total.is_finite() {
        let z = walk.total;
        return Ok(Marginals {
            tracks: n,
            detections: d,
            beta: walk.beta.iter().map(|v| v / z).collect(),
            clutter: walk.fp.iter().map(|v| v / z).collect(),
            miss: walk.missed.iter().map(|v| v / z).collect(),
            degenerate: false,
        });
    }

    // Uniform over each detection's options (clutter plus gated tracks).
    let mut beta = vec![0.0; n * d];
    let mut fp = vec![0.0; d];
    for k in 0..d {
        let options: Vec<usize> = (0..n).filter(|&r| pair[r * d + k] > 0.0).collect();
        let share = 1.0 / (options.len() + 1) as f64;
        fp[k] = share;
        for r in options {
            beta[r * d + k] = share;
        }
    }
    Ok(Marginals { tracks: n, detections: d, beta, clutter: fp, miss: vec![1.0; n], degenerate: true })
}

/// Identity per detection: Hungarian on `−ln β` with one private "missed"
/// column per track. Returns the matched detection of each track.
pub fn jpda_labels(m: &Marginals) -> Vec<Option<usize>> {
    let (n, d) = (m.tracks, m.detections);
    let neg_log = |p: f64| if p > 0.0 { (-p.ln()).min(1e6) } else { FORBIDDEN };
    let cost = CostMatrix::from_fn(n, d + n, |r, c| {
        if c < d {
            neg_log(m.beta(r, c))
        } else if c - d == r {
            neg_log(m.miss[r])
        } else {
            FORBIDDEN
        }
    })
    .expect("costs are finite");
    let a = hungarian(&cost);
    a.row_to_col
        .iter()
        .enumerate()
        .map(|(r, c)| c.filter(|&c| c < d && cost.get(r, c) < FORBIDDEN))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct JpdaStep {
    pub output: FrameOutput,
    pub marginals: Marginals,
}

#[derive(Debug, Clone)]
pub struct Jpda {
    config: BaselineConfig,
    n: usize,
    m: usize,
    dt: f64,
    noise: KalmanNoise,
    r: Matrix2<f64>,
    p_detect: f64,
    clutter_density: f64,
    heading_sigma: f64,
    tracks: Vec<Option<KalmanTrack>>,
    degenerate_frames: u64,
}

impl Jpda {
    /// Detection probability and clutter density are taken from the
    /// generating simulator configuration.
    pub fn new(config: BaselineConfig, sim: &SimConfig) -> Result<Self> {
        config.validate()?;
        sim.validate()?;
        if sim.n_robots > MAX_TRACKS || sim.max_detections > MAX_DETECTIONS {
            return Err(Error::Config(format!(
                "exact JPDA supports N <= {MAX_TRACKS} and M <= {MAX_DETECTIONS}"
            )));
        }
        let noise = config.kalman.noise(sim);
        Ok(Jpda {
            n: sim.n_robots,
            m: sim.max_detections,
            dt: sim.dt(),
            r: measurement_cov(&noise),
            noise,
            // Kept away from 0 and 1 so every frame has a feasible event.
            p_detect: (1.0 - sim.p_fn).clamp(0.01, 0.99),
            // Positions are normalized, so the field has unit area; headings
            // of clutter are uniform on the circle.
            clutter_density: sim.p_fp.max(1e-6) / (2.0 * PI),
            heading_sigma: config.heading_sigma.unwrap_or(sim.sigma_phi.max(0.05)),
            tracks: vec![None; sim.n_robots],
            degenerate_frames: 0,
            config,
        })
    }

    pub fn tracks(&self) -> &[Option<KalmanTrack>] {
        &self.tracks
    }

    /// Frames whose marginals fell back to uniform.
    pub fn degenerate_frames(&self) -> u64 {
        self.degenerate_frames
    }

    fn heading_density(&self, delta: f64) -> f64 {
        let s = self.heading_sigma;
        (-0.5 * (delta / s).powi(2)).exp() / ((2.0 * PI).sqrt() * s)
    }

    pub fn step_detailed(&mut self, frame: &FrameInput) -> Result<JpdaStep> {
        frame.validate(self.n, self.m)?;
        for t in self.tracks.iter_mut().flatten() {
            t.predict(self.dt, &self.noise)?;
        }
        let dets: Vec<usize> = frame.occupied().collect();
        let nd = dets.len();
        let mut pair = vec![0.0; self.n * nd];
        for (r, track) in self.tracks.iter().enumerate() {
            for (k, &s) in dets.iter().enumerate() {
                let det = &frame.slots[s];
                let heading = self.heading_density(diff(frame.broadcasts[r], det.phi));
                pair[r * nd + k] = match track {
                    Some(t) => {
                        if t.mahalanobis_sq((det.x, det.y), &self.r)? <= self.config.jpda_gate {
                            self.p_detect * t.likelihood((det.x, det.y), &self.r)? * heading
                        } else {
                            0.0
                        }
                    }
                    // Unit spatial density over the normalized field.
                    None => self.config.birth_weight * self.p_detect * heading,
                };
            }
        }
        let miss = vec![1.0 - self.p_detect; self.n];
        let clutter = vec![self.clutter_density; nd];
        let marginals = jpda_marginals(&pair, &miss, &clutter)?;

        let mut label = AssignmentLabel::empty(self.m);
        if marginals.degenerate {
            self.degenerate_frames += 1;
            for t in self.tracks.iter_mut().flatten() {
                t.misses += 1;
            }
        } else {
            let matched = jpda_labels(&marginals);
            let points: Vec<(f64, f64)> = dets.iter().map(|&s| (frame.slots[s].x, frame.slots[s].y)).collect();
            for (r, track) in self.tracks.iter_mut().enumerate() {
                if let Some(k) = matched[r] {
                    label.classes[dets[k]] = r + 1;
                }
                match (track.as_mut(), matched[r]) {
                    (Some(t), hit) => {
                        let weights: Vec<f64> = (0..nd).map(|k| marginals.beta(r, k)).collect();
                        t.pda_update(&points, &weights, &self.r)?;
                        if let Some(k) = hit {
                            t.phi = frame.slots[dets[k]].phi;
                            t.misses = 0;
                        } else {
                            t.misses += 1;
                        }
                    }
                    (None, Some(k)) => {
                        let d = &frame.slots[dets[k]];
                        *track = Some(KalmanTrack::spawn(d.x, d.y, d.phi, &self.noise));
                    }
                    (None, None) => {}
                }
            }
        }
        let max_misses = self.config.max_misses;
        for track in &mut self.tracks {
            if track.as_ref().is_some_and(|t| t.misses > max_misses) {
                *track = None;
            }
        }
        let positions = self.tracks.iter().map(|t| t.as_ref().map(KalmanTrack::position)).collect();
        Ok(JpdaStep { output: FrameOutput { label, positions }, marginals })
    }
}

impl Associator for Jpda {
    fn name(&self) -> &str {
        "jpda"
    }

    fn reset(&mut self) {
        self.tracks.iter_mut().for_each(|t| *t = None);
        self.degenerate_frames = 0;
    }

    fn step(&mut self, frame: &FrameInput) -> Result<FrameOutput> {
        self.step_detailed(frame).map(|s| s.output)
    }
}
