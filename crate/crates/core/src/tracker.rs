//! Per-robot location smoothing from network assignments.
//!
//! Each robot's location is a first-order low-pass filter of the detections
//! the network assigns to it, weighted by the assignment probability α:
//! `T ← α·L + (1 − α)·T`. The first observation initializes `T = L`; a robot
//! with no assigned detection keeps its previous location.

use crate::method::{Associator, FrameOutput};
use crate::net::{forward, AssignmentProbs, HiddenState, NetworkParams};
use crate::types::{AssignmentLabel, FrameInput};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FilteredTrack {
    /// Normalized field location.
    pub x: f64,
    pub y: f64,
    /// Frame index of the last update.
    pub last_update: u64,
    pub initialized: bool,
}

/// Detection slot assigned to a robot and the probability of that
/// assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotAssignment {
    pub slot: usize,
    pub alpha: f64,
}

/// One robot's smoothed location for one frame, as written to evaluation
/// output.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TrackRecord {
    pub t: u64,
    pub robot: usize,
    pub x: f64,
    pub y: f64,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    tracks: Vec<FilteredTrack>,
}

impl Tracker {
    pub fn new(n_robots: usize) -> Self {
        Tracker { tracks: vec![FilteredTrack::default(); n_robots] }
    }

    pub fn tracks(&self) -> &[FilteredTrack] {
        &self.tracks
    }

    pub fn reset(&mut self) {
        self.tracks.iter_mut().for_each(|t| *t = FilteredTrack::default());
    }

    /// Applies one frame. `assignments[j]` is robot `j`'s slot, if any.
    pub fn update(&mut self, frame: &FrameInput, assignments: &[Option<SlotAssignment>]) -> Result<()> {
        if assignments.len() != self.tracks.len() {
            return Err(Error::LengthMismatch(format!(
                "{} assignments for {} robots",
                assignments.len(),
                self.tracks.len()
            )));
        }
        for a in assignments.iter().flatten() {
            if !(0.0..=1.0).contains(&a.alpha) {
                return Err(Error::Invariant(format!("assignment probability {} outside [0, 1]", a.alpha)));
            }
            if frame.slots.get(a.slot).is_none_or(|d| d.is_empty()) {
                return Err(Error::Invariant(format!("slot {} is not an occupied detection", a.slot)));
            }
        }
        for (track, a) in self.tracks.iter_mut().zip(assignments) {
            let Some(a) = a else { continue };
            let d = &frame.slots[a.slot];
            let alpha = if track.initialized { a.alpha } else { 1.0 };
            track.x = alpha * d.x + (1.0 - alpha) * track.x;
            track.y = alpha * d.y + (1.0 - alpha) * track.y;
            track.last_update = frame.t;
            track.initialized = true;
        }
        Ok(())
    }

    pub fn positions(&self) -> Vec<Option<(f64, f64)>> {
        self.tracks.iter().map(|t| t.initialized.then_some((t.x, t.y))).collect()
    }
}

/// Robots named by the per-slot argmax labels. If several slots name the
/// same robot, the one with the highest probability wins (lowest slot on
/// ties).
pub fn assignments_from_labels(probs: &AssignmentProbs, label: &AssignmentLabel, n: usize) -> Vec<Option<SlotAssignment>> {
    let mut out: Vec<Option<SlotAssignment>> = vec![None; n];
    for (slot, &class) in label.classes.iter().enumerate() {
        if class == 0 {
            continue;
        }
        let alpha = probs.get(slot, class);
        let entry = &mut out[class - 1];
        if entry.is_none_or(|e| alpha > e.alpha) {
            *entry = Some(SlotAssignment { slot, alpha });
        }
    }
    out
}

/// The network followed by the location filter, as one associator.
#[derive(Debug, Clone)]
pub struct NetTracker {
    params: NetworkParams,
    state: HiddenState,
    tracker: Tracker,
    records: Vec<TrackRecord>,
}

impl NetTracker {
    pub fn new(params: NetworkParams) -> Result<Self> {
        params.validate()?;
        Ok(NetTracker {
            state: HiddenState::zeros(&params.arch),
            tracker: Tracker::new(params.arch.n_robots),
            records: Vec::new(),
            params,
        })
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    /// Per-frame, per-robot smoothed locations since the last reset.
    pub fn records(&self) -> &[TrackRecord] {
        &self.records
    }

    /// Runs the network and filter, also returning the class probabilities.
    pub fn step_detailed(&mut self, frame: &FrameInput) -> Result<(FrameOutput, AssignmentProbs)> {
        let (probs, next) = forward(frame, &self.state, &self.params)?;
        self.state = next;
        let (label, _) = crate::net::decode(&probs, frame);
        let assigned = assignments_from_labels(&probs, &label, self.params.arch.n_robots);
        self.tracker.update(frame, &assigned)?;
        for (robot, (t, a)) in self.tracker.tracks().iter().zip(&assigned).enumerate() {
            if t.initialized {
                self.records.push(TrackRecord { t: frame.t, robot: robot + 1, x: t.x, y: t.y, alpha: a.map(|a| a.alpha) });
            }
        }
        Ok((FrameOutput { label, positions: self.tracker.positions() }, probs))
    }
}

impl Associator for NetTracker {
    fn name(&self) -> &str {
        "net"
    }

    fn reset(&mut self) {
        self.state.reset();
        self.tracker.reset();
        self.records.clear();
    }

    fn step(&mut self, frame: &FrameInput) -> Result<FrameOutput> {
        self.step_detailed(frame).map(|(o, _)| o)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Detection;
    use approx::assert_abs_diff_eq;

    fn frame(x: f64, y: f64) -> FrameInput {
        FrameInput { t: 3, broadcasts: vec![0.0], slots: vec![Detection { x, y, phi: 0.0, gamma: 0.9 }] }
    }

    fn at(x: f64, y: f64) -> Tracker {
        Tracker { tracks: vec![FilteredTrack { x, y, last_update: 0, initialized: true }] }
    }

    #[test]
    fn alpha_limits_and_midpoint() {
        let a = |alpha| [Some(SlotAssignment { slot: 0, alpha })];
        let mut t = at(0.0, 0.0);
        t.update(&frame(1.0, 1.0), &a(1.0)).unwrap();
        assert_eq!(t.positions(), vec![Some((1.0, 1.0))]);
        let mut t = at(0.2, 0.4);
        t.update(&frame(1.0, 1.0), &a(0.0)).unwrap();
        assert_eq!(t.positions(), vec![Some((0.2, 0.4))]);
        let mut t = at(0.0, 0.0);
        t.update(&frame(1.0, 1.0), &a(0.5)).unwrap();
        assert_eq!(t.positions(), vec![Some((0.5, 0.5))]);
        assert_eq!(t.tracks()[0].last_update, 3);
    }

    #[test]
    fn first_observation_snaps_and_unassigned_holds() {
        let mut t = Tracker::new(1);
        assert_eq!(t.positions(), vec![None]);
        t.update(&frame(0.3, 0.7), &[Some(SlotAssignment { slot: 0, alpha: 0.1 })]).unwrap();
        assert_eq!(t.positions(), vec![Some((0.3, 0.7))]);
        t.update(&frame(0.9, 0.9), &[None]).unwrap();
        assert_eq!(t.positions(), vec![Some((0.3, 0.7))]);
    }

    #[test]
    fn converges_geometrically_to_constant_input() {
        let mut t = at(0.0, 1.0);
        let alpha = 0.3;
        for k in 1..=40 {
            t.update(&frame(0.5, 0.5), &[Some(SlotAssignment { slot: 0, alpha })]).unwrap();
            let expected = 0.5 * (1.0 - (1.0f64 - alpha).powi(k));
            assert_abs_diff_eq!(t.tracks()[0].x, expected, epsilon = 1e-12);
            assert_abs_diff_eq!(t.tracks()[0].y, 1.0 - expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        let mut t = Tracker::new(1);
        assert!(t.update(&frame(0.5, 0.5), &[Some(SlotAssignment { slot: 0, alpha: 1.5 })]).is_err());
        assert!(t.update(&frame(0.5, 0.5), &[Some(SlotAssignment { slot: 1, alpha: 0.5 })]).is_err());
        assert!(t.update(&frame(0.5, 0.5), &[]).is_err());
    }

    #[test]
    fn labels_pick_most_probable_slot() {
        let probs = AssignmentProbs { slots: 3, classes: 3, data: vec![0.2, 0.7, 0.1, 0.1, 0.8, 0.1, 0.5, 0.2, 0.3] };
        let label = AssignmentLabel { classes: vec![1, 1, 0] };
        let a = assignments_from_labels(&probs, &label, 2);
        assert_eq!(a, vec![Some(SlotAssignment { slot: 1, alpha: 0.8 }), None]);
    }
}
