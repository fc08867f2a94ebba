//! Shared domain values. Everything here is a plain immutable value after
//! construction and is `Send + Sync`.

use serde::{Deserialize, Serialize};

use crate::sim::SimConfig;
use crate::{Error, Result};

/// One detector output in normalized egocentric coordinates.
///
/// `gamma == 0` marks an empty slot; empty slots carry zero position and
/// heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    /// Estimated absolute heading, radians in `[-π, π)`.
    pub phi: f64,
    /// Detector confidence in `[0, 1]`.
    pub gamma: f64,
}

impl Detection {
    pub const EMPTY: Detection = Detection { x: 0.0, y: 0.0, phi: 0.0, gamma: 0.0 };

    pub fn is_empty(&self) -> bool {
        self.gamma == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(in_unit(self.x) && in_unit(self.y) && in_unit(self.gamma)) {
            return Err(Error::Invariant(format!("detection out of range: {self:?}")));
        }
        if !(-std::f64::consts::PI..std::f64::consts::PI).contains(&self.phi) {
            return Err(Error::Invariant(format!("heading not wrapped: {}", self.phi)));
        }
        if self.is_empty() && (self.x != 0.0 || self.y != 0.0 || self.phi != 0.0) {
            return Err(Error::Invariant("empty slot with non-zero payload".into()));
        }
        Ok(())
    }
}

/// Everything observable at one timestep: the robots' broadcast headings and
/// the `M` detection slots in arbitrary order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameInput {
    pub t: u64,
    /// Broadcast absolute headings, radians, one per robot. The encoder maps
    /// them to `[-1, 1]`.
    pub broadcasts: Vec<f64>,
    pub slots: Vec<Detection>,
}

impl FrameInput {
    pub fn n_robots(&self) -> usize {
        self.broadcasts.len()
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    /// Indices of non-empty slots.
    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots.iter().enumerate().filter(|(_, d)| !d.is_empty()).map(|(i, _)| i)
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if self.broadcasts.len() != n {
            return Err(Error::Invariant(format!(
                "frame {}: {} broadcasts, expected {n}",
                self.t,
                self.broadcasts.len()
            )));
        }
        if self.slots.len() != m {
            return Err(Error::Invariant(format!(
                "frame {}: {} slots, expected {m}",
                self.t,
                self.slots.len()
            )));
        }
        for b in &self.broadcasts {
            if !(-std::f64::consts::PI..std::f64::consts::PI).contains(b) {
                return Err(Error::Invariant(format!("broadcast heading not wrapped: {b}")));
            }
        }
        self.slots.iter().try_for_each(Detection::validate)
    }
}

/// Per-slot identity classes: 0 is false positive / empty, `r` in `1..=N`
/// is robot `r`. Shared by ground truth and predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssignmentLabel {
    pub classes: Vec<usize>,
}

impl AssignmentLabel {
    pub fn empty(m: usize) -> Self {
        AssignmentLabel { classes: vec![0; m] }
    }

    /// Checks class range, and for ground truth also that no robot occupies
    /// two slots.
    pub fn validate(&self, n: usize, m: usize, exclusive: bool) -> Result<()> {
        if self.classes.len() != m {
            return Err(Error::Invariant(format!(
                "label has {} entries, expected {m}",
                self.classes.len()
            )));
        }
        let mut seen = vec![false; n + 1];
        for &c in &self.classes {
            if c > n {
                return Err(Error::Invariant(format!("class {c} exceeds N = {n}")));
            }
            if exclusive && c > 0 {
                if seen[c] {
                    return Err(Error::Invariant(format!("robot {c} assigned to two slots")));
                }
                seen[c] = true;
            }
        }
        Ok(())
    }
}

/// Ground-truth pose of one robot, in field metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotTruth {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    /// In the field of view and not occluded.
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub input: FrameInput,
    pub label: AssignmentLabel,
    pub truth: Vec<RobotTruth>,
}

/// A labelled sequence together with the configuration that generated it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub config: SimConfig,
    pub frames: Vec<FrameRecord>,
}

impl SequenceRecord {
    pub fn n_robots(&self) -> usize {
        self.config.n_robots
    }

    pub fn max_detections(&self) -> usize {
        self.config.max_detections
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn inputs(&self) -> impl Iterator<Item = &FrameInput> {
        self.frames.iter().map(|f| &f.input)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let (n, m) = (self.n_robots(), self.max_detections());
        let t0 = self.frames.first().map_or(0, |f| f.input.t);
        for (k, f) in self.frames.iter().enumerate() {
            if f.input.t != t0 + k as u64 {
                return Err(Error::Invariant(format!(
                    "frame index {} not contiguous (expected {})",
                    f.input.t,
                    t0 + k as u64
                )));
            }
            f.input.validate(n, m)?;
            f.label.validate(n, m, true)?;
            if f.truth.len() != n {
                return Err(Error::Invariant(format!(
                    "frame {}: {} ground-truth poses, expected {n}",
                    f.input.t,
                    f.truth.len()
                )));
            }
            for (slot, &c) in f.label.classes.iter().enumerate() {
                if c > 0 && f.input.slots[slot].is_empty() {
                    return Err(Error::Invariant(format!(
                        "frame {}: empty slot {slot} labelled as robot {c}",
                        f.input.t
                    )));
                }
            }
        }
        Ok(())
    }
}
